"""Command-line interface.

Subcommands: ``fit``, ``path``, ``select``, ``rotate``, ``scores`` and
``simulate``. Results go to files (or stdout when ``--out`` is omitted);
diagnostics go to stderr. Exit codes: 0 success, 2 usage or parameter
error, 3 data error, 4 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .errors import InvalidDataError, NumericalError, ParameterError, SparseFactorError
from .model import FactorModel, SampleMoments, posterior_scores, sample_covariance
from .path import build_grid, fit_path, init_loadings, path_rho_max
from .penalty import PenaltySpec
from .rotation import two_step
from .selection import CRITERIA, criteria, select
from .simulation import MODELS, StudyConfig, run_study
from .solver import SolverOptions, fit

log = logging.getLogger("sparsefactor")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- serialization

def num(x):
    """JSON-ready float: exact zeros become ``0``, infinities ``"inf"``."""
    x = float(x)
    if x == 0.0:
        return 0
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def unnum(x) -> float:
    return float(x)


def _matrix(a):
    return [[num(v) for v in row] for row in np.asarray(a)]


def _vector(a):
    return [num(v) for v in np.asarray(a).ravel()]


def _fmt(x) -> str:
    # repr keeps 17 significant digits
    x = float(x)
    return "0" if x == 0.0 else repr(x)


def write_json(doc, out):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InvalidDataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidDataError(f"{path} is not valid JSON: {exc}") from exc


def read_matrix(path) -> np.ndarray:
    """Numeric CSV with an optional header row."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InvalidDataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise InvalidDataError(f"{path} is empty")

    def parse(row):
        return [float(c) for c in row]

    try:
        parse(rows[0])
    except ValueError:
        rows = rows[1:]  # header
    try:
        data = [parse(r) for r in rows]
    except ValueError as exc:
        raise InvalidDataError(f"{path}: non-numeric entry ({exc})") from exc
    if not data or len({len(r) for r in data}) != 1:
        raise InvalidDataError(f"{path}: rows are empty or ragged")
    return np.array(data, dtype=float)


def load_moments(args) -> SampleMoments:
    if args.cov is not None:
        if args.n is None:
            raise UsageError("--cov requires --n (number of observations)")
        if args.input is not None:
            raise UsageError("give either --input or --cov, not both")
        S = read_matrix(args.cov)
        moments = SampleMoments(S, args.n)
        if args.standardize:
            d = np.sqrt(moments.diag)
            if np.any(d == 0):
                raise InvalidDataError("cannot standardize a zero-variance variable")
            moments = SampleMoments(S / np.outer(d, d), args.n)
        return moments
    if args.input is None:
        raise UsageError("one of --input or --cov is required")
    return sample_covariance(read_matrix(args.input), standardize=args.standardize)


def options_from(args) -> SolverOptions:
    opts = SolverOptions()
    if getattr(args, "eta", None) is not None:
        opts = replace(opts, eta=args.eta)
    return opts


def spec_from(args, gamma=None) -> PenaltySpec:
    if args.penalty == "hard":
        return PenaltySpec.from_name("hard")
    g = gamma if gamma is not None else (args.gamma[0] if args.gamma else None)
    if args.penalty == "lasso":
        return PenaltySpec("lasso")
    if g is None:
        raise UsageError(f"--gamma is required for --penalty {args.penalty}")
    return PenaltySpec(args.penalty, g)


def model_doc(model: FactorModel) -> dict:
    return {"lambda": _matrix(model.Lambda), "psi": _vector(model.psi),
            "p": model.p, "m": model.m}


def model_from_doc(doc) -> FactorModel:
    try:
        Lam = np.array([[unnum(v) for v in row] for row in doc["lambda"]], dtype=float)
        psi = np.array([unnum(v) for v in doc["psi"]], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidDataError(f"malformed model document: {exc}") from exc
    return FactorModel(Lam, psi)


# ---------------------------------------------------------------- path documents

def cell_doc(cell) -> dict:
    obj = cell.fit.objective
    return {
        "gamma": num(cell.gamma),
        "rho": num(cell.rho),
        "rho_star": num(cell.rho_star),
        "loglik": num(obj.loglik),
        "penalized": num(obj.total),
        "df": int(cell.df),
        "aic": num(cell.criteria.aic),
        "bic": num(cell.criteria.bic),
        "caic": num(cell.criteria.caic),
        "lambda": _matrix(cell.model.Lambda),
        "psi": _vector(cell.model.psi),
        "converged": bool(cell.fit.converged),
    }


def path_doc(path, criterion: str, moments: SampleMoments, timings=True) -> dict:
    T, K = path.grid.shape
    meta = {k: v for k, v in path.meta.items() if timings or k != "timings"}
    meta["version"] = __version__
    meta["family"] = path.grid.family
    meta["N"] = moments.N
    meta["p"] = moments.p
    if meta.get("rho_K") is not None:
        meta["rho_K"] = num(meta["rho_K"])
    t, k = select(path, criterion)
    return {
        "grid": {"rho": _vector(path.grid.rhos), "gamma": [num(g) for g in path.grid.gammas]},
        "cells": [cell_doc(path.cell(tt, kk)) for tt in range(T) for kk in range(K)],
        "meta": meta,
        "best": {"criterion": criterion, "index": t * K + k, "t": t, "k": k,
                 "gamma": num(path.grid.gammas[t]), "rho": num(path.grid.rhos[k])},
    }


def select_from_doc(doc: dict, criterion: str):
    """Best cell of a path document; ties go to larger rho, then larger gamma."""
    if criterion not in CRITERIA:
        raise ParameterError(f"unknown criterion {criterion!r}")
    try:
        cells = doc["cells"]
        best, key = None, None
        for idx, c in enumerate(cells):
            g = unnum(c["gamma"])
            kk = (unnum(c[criterion]), -unnum(c["rho"]), -(1e308 if math.isinf(g) else g))
            if key is None or kk < key:
                best, key = idx, kk
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidDataError(f"malformed path document: {exc}") from exc
    if best is None:
        raise InvalidDataError("path document has no cells")
    return best, cells[best]


def path_long_rows(path):
    """Long-format rows (gamma, rho, i, j, lambda) for plotting the path."""
    for cell in path:
        L = cell.model.Lambda
        for i in range(L.shape[0]):
            for j in range(L.shape[1]):
                yield (cell.gamma, cell.rho, i, j, L[i, j])


def write_long_csv(path, out):
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gamma", "rho", "i", "j", "lambda"])
        for g, r, i, j, v in path_long_rows(path):
            w.writerow([_fmt(g), _fmt(r), i, j, _fmt(v)])


# ---------------------------------------------------------------- commands

def cmd_fit(args):
    moments = load_moments(args)
    opts = options_from(args)
    spec = spec_from(args)
    init = init_loadings(moments, args.factors, opts)
    if args.rho is None:
        raise UsageError("fit requires --rho")
    res = fit(moments, args.factors, args.rho, spec, init, opts)
    crit = criteria(res.objective.loglik, res.df, moments.N, moments.p)
    doc = {
        "penalty": spec.family, "gamma": num(spec.gamma),
        "rho": num(res.rho), "rho_star": num(res.rho_star),
        "loglik": num(res.objective.loglik), "penalized": num(res.objective.total),
        "df": res.df, "aic": num(crit.aic), "bic": num(crit.bic), "caic": num(crit.caic),
        "iterations": res.iterations, "converged": res.converged,
        **model_doc(res.model),
        "meta": {"version": __version__, "N": moments.N},
    }
    write_json(doc, args.out)


def _path_grid(args, moments, opts, init):
    rho_K = path_rho_max(moments, init, opts)
    fam = "mcp" if args.penalty == "hard" else args.penalty
    if args.penalty == "hard":
        gammas = (PenaltySpec.from_name("hard").gamma,)
    else:
        gammas = tuple(args.gamma) if args.gamma else None
    return build_grid(rho_K, K=args.n_rhos, delta=args.delta, family=fam,
                      T=args.n_gammas, gammas=gammas), rho_K


def cmd_path(args):
    moments = load_moments(args)
    opts = options_from(args)
    init = init_loadings(moments, args.factors, opts)
    grid, rho_K = _path_grid(args, moments, opts, init)
    path = fit_path(moments, args.factors, grid, opts, seed=args.seed, init=init)
    path.meta["rho_K"] = rho_K
    write_json(path_doc(path, args.criterion, moments), args.out)
    if args.csv:
        write_long_csv(path, args.csv)


def cmd_select(args):
    doc = read_json(args.input)
    idx, cell = select_from_doc(doc, args.criterion)
    write_json({"criterion": args.criterion, "index": idx, "cell": cell}, args.out)


def cmd_rotate(args):
    moments = load_moments(args)
    res = two_step(moments, args.factors, args.rotation, options_from(args), seed=args.seed)
    doc = {"criterion": args.rotation, "criterion_value": num(res.criterion_value),
           "iterations": res.iterations, "T": _matrix(res.T),
           "lambda": _matrix(res.Lambda_rotated), "psi": _vector(res.psi),
           "meta": {"version": __version__, "N": moments.N, "seed": args.seed}}
    write_json(doc, args.out)


def cmd_scores(args):
    doc = read_json(args.model)
    if "cells" in doc:
        _, doc = select_from_doc(doc, args.criterion)
    elif "cell" in doc:
        doc = doc["cell"]
    model = model_from_doc(doc)
    X = read_matrix(args.input)
    if X.shape[1] != model.p:
        raise InvalidDataError(f"data have {X.shape[1]} columns, model has p={model.p}")
    X = X - X.mean(axis=0)
    if args.standardize:
        sd = np.sqrt(np.mean(X**2, axis=0))
        if np.any(sd == 0):
            raise InvalidDataError("cannot standardize a constant column")
        X = X / sd
    F = posterior_scores(model, X)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"f{j + 1}" for j in range(model.m)])
    for row in np.atleast_2d(F):
        w.writerow([_fmt(v) for v in row])
    if args.out in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())


TABLE_FIELDS = ("method", "criterion", "mse_lambda", "mse_psi", "tpr", "tnr",
                "se_mse_lambda", "se_mse_psi", "se_tpr", "se_tnr", "n")


def write_table(report, out):
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_FIELDS)
        for row in report["rows"]:
            w.writerow([row[f] if f in ("method", "criterion", "n") else _fmt(row[f])
                        for f in TABLE_FIELDS])


def cmd_simulate(args):
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("SPARSEFACTOR_THREADS", "1") or 1)
    if args.penalty == "lasso":
        fam, gammas = "mcp", ()
    elif args.penalty == "hard":
        fam, gammas = "mcp", (PenaltySpec.from_name("hard").gamma,)
    else:
        fam, gammas = args.penalty, tuple(args.gamma or (1.96,))
    config = StudyConfig(model=args.model, N=args.n, replications=args.reps, family=fam,
                         gammas=gammas, seed=args.seed, K=args.n_rhos, delta=args.delta,
                         rotations=args.rotations, threads=max(1, threads),
                         options=options_from(args))
    report = run_study(config)
    report["version"] = __version__
    write_json(report, args.out)
    if args.table:
        write_table(report, args.table)


# ---------------------------------------------------------------- parser

def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _add_data(p, need_factors=True):
    p.add_argument("--input", help="CSV data matrix (rows = observations, header optional)")
    p.add_argument("--cov", help="CSV p x p sample covariance (requires --n)")
    p.add_argument("--n", type=_positive_int, help="number of observations behind --cov")
    p.add_argument("--standardize", action="store_true",
                   help="analyse the correlation matrix instead of the covariance")
    if need_factors:
        p.add_argument("--factors", "-m", type=_positive_int, required=True)


def _add_penalty(p):
    p.add_argument("--penalty", choices=("lasso", "scad", "mcp", "hard"), default="mcp")
    p.add_argument("--gamma", type=float, action="append",
                   help="gamma value(s); repeat for several rows of the grid")
    p.add_argument("--eta", type=float, default=None, help="improper-solution guard (0.001)")


def _add_grid(p):
    p.add_argument("--n-rhos", type=_positive_int, default=30, help="K, number of rho values")
    p.add_argument("--delta", type=float, default=0.001, help="rho_min / rho_K")
    p.add_argument("--n-gammas", type=_positive_int, default=10,
                   help="T, number of gamma values including the lasso")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparsefactor",
                                 description="Sparse factor analysis by penalized likelihood.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit at a single (rho, gamma)")
    _add_data(p)
    _add_penalty(p)
    p.add_argument("--rho", type=float, help="lasso-scale regularization parameter")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("path", help="solution path over the (gamma, rho) grid")
    _add_data(p)
    _add_penalty(p)
    _add_grid(p)
    p.add_argument("--criterion", choices=CRITERIA, default="bic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--csv", help="also write the long-format path table here")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("select", help="pick the best cell of a path JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--criterion", choices=CRITERIA, default="bic")
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("rotate", help="ML fit followed by an orthogonal rotation")
    _add_data(p)
    p.add_argument("--rotation", choices=("l1", "varimax"), default="l1")
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rotate)

    p = sub.add_parser("scores", help="posterior-mean factor scores")
    p.add_argument("--model", required=True, help="fit, select or path JSON")
    p.add_argument("--input", required=True, help="CSV data matrix")
    p.add_argument("--criterion", choices=CRITERIA, default="bic")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_scores)

    p = sub.add_parser("simulate", help="Monte Carlo study on Model A, B or the example")
    p.add_argument("--model", choices=sorted(MODELS), default="A")
    p.add_argument("--n", type=_positive_int, default=200)
    p.add_argument("--reps", type=_positive_int, default=100)
    _add_penalty(p)
    p.add_argument("--n-rhos", type=_positive_int, default=30)
    p.add_argument("--delta", type=float, default=0.001)
    p.add_argument("--rotations", action="store_true", help="include the two-step baselines")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default: $SPARSEFACTOR_THREADS or 1)")
    p.add_argument("--out")
    p.add_argument("--table", help="summary table as CSV (method x criterion rows)")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the message
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidDataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SparseFactorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0
