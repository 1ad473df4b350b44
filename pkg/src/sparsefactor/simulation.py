"""Monte Carlo harness: data generation, column alignment and recovery metrics."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ParameterError, SparseFactorError
from .model import FactorModel, sample_covariance
from .path import build_grid, fit_path, init_loadings, path_rho_max
from .selection import CRITERIA, select
from .solver import SolverOptions

log = logging.getLogger(__name__)


def _unit_variance_model(Lam) -> FactorModel:
    Lam = np.asarray(Lam, dtype=float)
    return FactorModel(Lam, 1.0 - np.sum(Lam**2, axis=1))


def model_a() -> FactorModel:
    """6 x 2 loadings (0.95, 0.90, 0.85 | 0.80, 0.75, 0.70), unit-variance Sigma."""
    Lam = np.zeros((6, 2))
    Lam[:3, 0] = [0.95, 0.90, 0.85]
    Lam[3:, 1] = [0.80, 0.75, 0.70]
    return _unit_variance_model(Lam)


def model_b(block: int = 250) -> FactorModel:
    """Block-diagonal 1000 x 4 loadings with levels 0.95, 0.90, 0.85, 0.80."""
    levels = (0.95, 0.90, 0.85, 0.80)
    Lam = np.zeros((block * len(levels), len(levels)))
    for j, v in enumerate(levels):
        Lam[j * block:(j + 1) * block, j] = v
    return _unit_variance_model(Lam)


def example_model() -> FactorModel:
    """Perfect simple structure with loadings 0.82 and psi = 0.32 (6 x 2)."""
    Lam = np.zeros((6, 2))
    Lam[3:, 0] = 0.82
    Lam[:3, 1] = 0.82
    return FactorModel(Lam, np.full(6, 0.32))


MODELS = {"A": model_a, "B": model_b, "example": example_model}


def generate(model: FactorModel, N: int, seed) -> np.ndarray:
    """Draw ``N`` rows of ``Lambda z + Psi^{1/2} e`` with standard normal z, e."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((N, model.m))
    e = rng.standard_normal((N, model.p))
    return z @ model.Lambda.T + e * np.sqrt(model.psi)


def align(est: FactorModel, truth: FactorModel) -> FactorModel:
    """Permute and sign-flip the columns of ``est`` to match ``truth``.

    The permutation maximizes the summed absolute inner products between
    matched columns (an exact linear assignment); each matched column is
    then flipped so its inner product with the truth is non-negative.
    """
    if est.Lambda.shape != truth.Lambda.shape:
        raise ParameterError("est and truth must have the same shape")
    score = np.abs(truth.Lambda.T @ est.Lambda)  # truth col x est col
    rows, cols = linear_sum_assignment(-score)
    perm = cols[np.argsort(rows)]
    L = est.Lambda[:, perm]
    signs = np.sign(np.sum(L * truth.Lambda, axis=0))
    signs[signs == 0] = 1.0
    return FactorModel(L * signs, est.psi)


@dataclass(frozen=True)
class StudyMetrics:
    mse_lambda: float
    mse_psi: float
    tpr: float
    tnr: float
    se_mse_lambda: float = 0.0
    se_mse_psi: float = 0.0
    se_tpr: float = 0.0
    se_tnr: float = 0.0
    n: int = 1


def replication_metrics(aligned: FactorModel, truth: FactorModel) -> np.ndarray:
    """Per-replication (squared-error Lambda, squared-error psi, TPR, TNR)."""
    p, m = truth.Lambda.shape
    true_nz = truth.Lambda != 0
    est_nz = aligned.Lambda != 0
    tpr = float(np.sum(est_nz & true_nz)) / max(int(true_nz.sum()), 1) if true_nz.any() else 1.0
    tnr = float(np.sum(~est_nz & ~true_nz)) / int((~true_nz).sum()) if (~true_nz).any() else 1.0
    return np.array([
        float(np.sum((truth.Lambda - aligned.Lambda) ** 2)) / (p * m),
        float(np.sum((truth.psi - aligned.psi) ** 2)) / p,
        tpr,
        tnr,
    ])


def metrics(aligned_estimates, truth: FactorModel) -> StudyMetrics:
    """Average MSE / TPR / TPR over replications (already aligned).

    ``MSE_Lambda = sum_s ||Lambda - Lambda_s||_F^2 / (R p m)``; TPR and TNR use
    exact zeros.
    """
    rows = np.array([replication_metrics(a, truth) for a in aligned_estimates])
    return _summarize(rows)


def _summarize(rows) -> StudyMetrics:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    n = rows.shape[0]
    mean = rows.mean(axis=0)
    se = rows.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(4)
    return StudyMetrics(*(float(x) for x in mean), *(float(x) for x in se), n=n)


@dataclass(frozen=True)
class StudyConfig:
    model: object = "A"  # "A", "B", "example" or a FactorModel
    N: int = 200
    replications: int = 100
    family: str = "mcp"
    gammas: tuple = (1.96,)
    criteria: tuple = CRITERIA
    seed: int = 0
    K: int = 30
    delta: float = 0.001
    rotations: bool = False
    threads: int = 1
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.replications < 1:
            raise ParameterError("replications must be at least 1")
        if self.N < 2:
            raise ParameterError("N must be at least 2")
        for c in self.criteria:
            if c not in CRITERIA:
                raise ParameterError(f"unknown criterion {c!r}")

    def truth(self) -> FactorModel:
        if isinstance(self.model, FactorModel):
            return self.model
        try:
            return MODELS[str(self.model)]()
        except KeyError:
            raise ParameterError(f"unknown model {self.model!r}") from None

    def describe(self) -> dict:
        d = asdict(self)
        del d["threads"]  # execution detail; reports must not depend on it
        if isinstance(self.model, FactorModel):
            d["model"] = "custom"
        d["gammas"] = list(self.gammas)
        d["criteria"] = list(self.criteria)
        return d


def method_label(gamma: float, family: str) -> str:
    return "lasso" if math.isinf(gamma) else f"{family}(gamma={gamma:g})"


def run_replication(config: StudyConfig, seed) -> dict:
    """One replication: generate, fit the path, select, align, score.

    Returns ``{method: {criterion: metrics-row}}`` with rows from
    :func:`replication_metrics`.
    """
    truth = config.truth()
    m = truth.m
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    data_seed, path_seed = (int(x) for x in seed.generate_state(2))
    X = generate(truth, config.N, data_seed)
    moments = sample_covariance(X)
    opts = config.options
    init = init_loadings(moments, m, opts)
    rho_K = path_rho_max(moments, init, opts)
    grid = build_grid(rho_K, K=config.K, delta=config.delta, family=config.family,
                      gammas=config.gammas)
    path = fit_path(moments, m, grid, opts, seed=path_seed, init=init)
    out = {}
    for t, g in enumerate(grid.gammas):
        label = method_label(g, grid.family)
        out[label] = {}
        for c in config.criteria:
            tt, kk = select(path, c, rows=[t])
            est = align(path.cell(tt, kk).model, truth)
            out[label][c] = replication_metrics(est, truth)
    if config.rotations:
        from .rotation import ml_fit, rotate

        ml = ml_fit(moments, m, opts)
        for crit in ("l1", "varimax"):
            rot = rotate(ml.Lambda, crit, seed=path_seed)
            est = align(FactorModel(rot.Lambda_rotated, ml.psi), truth)
            out.setdefault(f"rot_{crit}", {})["-"] = replication_metrics(est, truth)
    return out


def _safe_replication(args):
    config, seed = args
    try:
        return run_replication(config, seed)
    except SparseFactorError as exc:
        log.warning("replication failed: %s", exc)
        return None


def run_study(config: StudyConfig) -> dict:
    """Run all replications and return a Table-shaped report.

    Replication ``r`` uses the ``r``-th child of ``SeedSequence(seed)``, so
    results do not depend on ``threads``. Failed replications are excluded
    and counted.
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.replications)
    jobs = [(config, s) for s in seeds]
    threads = config.threads or int(os.environ.get("SPARSEFACTOR_THREADS", "1"))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_safe_replication, jobs))
    else:
        results = [_safe_replication(j) for j in jobs]
    ok = [r for r in results if r is not None]
    rows = []
    if ok:
        for method in ok[0]:
            for crit in ok[0][method]:
                stats = _summarize([r[method][crit] for r in ok])
                rows.append({"method": method, "criterion": crit, **asdict(stats)})
    return {
        "config": config.describe(),
        "replications": config.replications,
        "succeeded": len(ok),
        "failed": len(results) - len(ok),
        "rows": rows,
    }


def find_row(report: dict, method: str, criterion: str) -> dict:
    for row in report["rows"]:
        if row["method"] == method and row["criterion"] == criterion:
            return row
    raise KeyError((method, criterion))
