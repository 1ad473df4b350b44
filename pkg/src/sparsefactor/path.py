"""Pathwise driver over the (gamma, rho) grid.

The lasso row is computed first from ``rho_K`` downward with warm starts;
each concave row at ``rho_k`` is then warm-started from the row above it
(larger gamma) at the same ``rho_k``.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import AscentViolationError, ParameterError, SparseFactorError
from .model import FactorModel, SampleMoments
from .penalty import GAMMA_MIN, PenaltySpec
from .selection import CriterionSet, criteria, degrees_of_freedom
from .solver import (SolverOptions, FitResult, e_step, evaluate, fit, penalty_level,
                     _psi_kernel)

log = logging.getLogger(__name__)

N_RESTARTS = 5
RHO_SCALES = tuple(0.1 * h for h in range(1, 11))


class DegenerateInitWarning(UserWarning):
    """The one-factor ML start collapsed; eigen initialization was used."""


@dataclass(frozen=True)
class PathGrid:
    rhos: np.ndarray
    gammas: tuple
    family: str = "mcp"

    def __post_init__(self):
        rhos = np.asarray(self.rhos, dtype=float)
        if rhos.ndim != 1 or rhos.size < 1 or np.any(rhos <= 0):
            raise ParameterError("rhos must be a non-empty vector of positive values")
        if rhos.size > 1 and np.any(np.diff(rhos) >= 0):
            raise ParameterError("rhos must be strictly decreasing")
        g = tuple(float(x) for x in self.gammas)
        if not g:
            raise ParameterError("gammas must be non-empty")
        if any(b >= a for a, b in zip(g, g[1:])):
            raise ParameterError("gammas must be strictly decreasing (inf first)")
        rhos.setflags(write=False)
        object.__setattr__(self, "rhos", rhos)
        object.__setattr__(self, "gammas", g)
        PenaltySpec(self.family)  # validates the family name

    def spec(self, t: int) -> PenaltySpec:
        return PenaltySpec(self.family if not math.isinf(self.gammas[t]) else "lasso",
                           self.gammas[t])

    @property
    def shape(self):
        return len(self.gammas), len(self.rhos)


@dataclass(frozen=True)
class PathCell:
    gamma: float
    rho: float
    fit: FitResult
    df: int
    criteria: CriterionSet

    @property
    def rho_star(self) -> float:
        return self.fit.rho_star

    @property
    def model(self) -> FactorModel:
        return self.fit.model


@dataclass
class PathResult:
    cells: list  # cells[t][k]
    grid: PathGrid
    N: int
    meta: dict = field(default_factory=dict)

    def cell(self, t: int, k: int) -> PathCell:
        return self.cells[t][k]

    def __iter__(self):
        for row in self.cells:
            yield from row


def _eigen_column(S):
    e, V = np.linalg.eigh(S)
    lam = math.sqrt(max(e[-1], 0.0)) * V[:, -1]
    if lam.sum() < 0:
        lam = -lam
    return lam


def init_loadings(moments: SampleMoments, m: int,
                  options: SolverOptions | None = None) -> FactorModel:
    """Starting loadings: one-factor ML in column 1, zeros elsewhere.

    The one-factor fit is unpenalized EM started from the leading eigenpair
    of ``S``. Unique variances are ``s_ii - lambda_i1^2`` floored at
    ``psi_floor``.
    """
    options = options or SolverOptions()
    if m < 1:
        raise ParameterError("m must be at least 1")
    moments.require_positive_diagonal()
    S = moments.S
    s = np.diag(S)
    lam0 = _eigen_column(S)
    psi0 = np.maximum(s - lam0**2, 0.01 * s)
    lam = lam0
    try:
        res = fit(moments, 1, 0.0, PenaltySpec("lasso"),
                  FactorModel(lam0[:, None], psi0), options)
        if not res.converged:
            warnings.warn("one-factor ML did not converge; using eigen initialization",
                          DegenerateInitWarning, stacklevel=2)
        else:
            lam = res.model.Lambda[:, 0]
    except SparseFactorError as exc:
        warnings.warn(f"one-factor ML failed ({exc}); using eigen initialization",
                      DegenerateInitWarning, stacklevel=2)
    if np.max(np.abs(lam)) < 1e-6 * math.sqrt(s.max()):
        warnings.warn("one-factor ML loadings vanish (no common variance); "
                      "using eigen initialization", DegenerateInitWarning, stacklevel=2)
        lam = lam0
    Lam = np.zeros((moments.p, m))
    Lam[:, 0] = lam
    psi = np.maximum(s - lam**2, options.psi_floor)
    return FactorModel(Lam, psi)


def select_rho_max(moments: SampleMoments, init: FactorModel,
                   options: SolverOptions | None = None) -> float:
    """Smallest lasso ``rho`` at which the loadings are expected to be zero.

    For ``xi = 0.1, ..., 1.0`` the loading matrix keeps only the largest
    first-column entry, scaled by ``xi``; ``psi`` is re-estimated by one
    closed-form update at those loadings and ``rho(xi) = max_{i != alpha}
    |b_i1| / psi_i``. The result is ``max_xi rho(xi)``.
    """
    options = options or SolverOptions()
    p, m = init.Lambda.shape
    if p < 2:
        raise ParameterError("the regularization path needs at least 2 variables")
    col = init.Lambda[:, 0]
    if not np.any(col):
        raise ParameterError("first column of the initial loadings is zero")
    alpha = int(np.argmax(np.abs(col)))
    sdiag = np.diag(moments.S).copy()
    best = 0.0
    for xi in RHO_SCALES:
        Lam = np.zeros((p, m))
        Lam[alpha, 0] = xi * col[alpha]
        cache = e_step(FactorModel(Lam, init.psi), moments)
        psi = np.empty(p)
        _psi_kernel(sdiag, np.ascontiguousarray(cache.B), np.ascontiguousarray(cache.A),
                    Lam, options.eta, options.psi_floor, psi)
        cache = e_step(FactorModel(Lam, psi), moments)
        ratio = np.abs(cache.B[0]) / psi
        ratio[alpha] = -np.inf
        best = max(best, float(ratio.max()))
    return best


def path_rho_max(moments: SampleMoments, init: FactorModel,
                 options: SolverOptions | None = None, growth: float = 1.5,
                 max_tries: int = 60) -> float:
    """``select_rho_max`` checked against the solver.

    The lasso fit from ``init`` at the returned value has ``Lambda = O``
    exactly; the heuristic value is multiplied by ``growth`` until it does.
    """
    options = options or SolverOptions()
    rho = select_rho_max(moments, init, options)
    lasso = PenaltySpec("lasso")
    for _ in range(max_tries):
        res = fit(moments, init.m, rho, lasso, init, options)
        if not np.any(res.model.Lambda):
            return rho
        rho *= growth
    raise ParameterError("could not find a rho giving Lambda = O")


def build_grid(rho_K: float, K: int = 30, delta: float = 0.001, family: str = "mcp",
               T: int = 10, gammas=None) -> PathGrid:
    """Log-spaced rho grid from ``rho_K`` down to ``delta * rho_K`` and a gamma
    grid starting at ``inf`` (lasso) then ``T - 1`` values log-spaced from 100
    toward the family minimum. An explicit ``gammas`` sequence overrides ``T``.
    """
    if K < 2:
        raise ParameterError("K must be at least 2")
    if not 0 < delta < 1:
        raise ParameterError("delta must lie in (0, 1)")
    if not rho_K > 0:
        raise ParameterError("rho_K must be positive")
    rhos = np.geomspace(rho_K, delta * rho_K, K)
    fam = PenaltySpec(family).family
    if gammas is not None:
        g = [math.inf] + sorted((float(x) for x in gammas if not math.isinf(x)), reverse=True)
    elif fam == "lasso" or T <= 1:
        g = [math.inf]
    else:
        gmin = GAMMA_MIN[fam] + 0.01
        g = [math.inf] + list(np.geomspace(100.0, gmin, T)[:-1])
    return PathGrid(rhos, tuple(g), fam)


def _record(fit_res: FitResult, moments: SampleMoments, gamma: float, rho: float) -> PathCell:
    df = degrees_of_freedom(fit_res.model)
    crit = criteria(fit_res.objective.loglik, df, moments.N, moments.p)
    return PathCell(gamma=gamma, rho=rho, fit=fit_res, df=df, criteria=crit)


def maybe_expand_factors(current: FitResult, moments: SampleMoments, m: int, rho: float,
                         spec: PenaltySpec, options: SolverOptions, rng,
                         restarts: int = N_RESTARTS) -> FitResult:
    """Try to activate zero columns of ``current`` by restarts.

    If fewer than ``m`` columns are nonzero, each restart refills the zero
    columns with i.i.d. Uniform(-0.5, 0.5) entries and refits. One further
    restart fills them from the leading eigenvectors of the residual
    covariance ``S - Sigma_hat``. The fit with the largest penalized
    objective (``current`` included) is returned.
    """
    Lam = current.model.Lambda
    zero_cols = np.flatnonzero(~np.any(Lam != 0, axis=0))
    if zero_cols.size == 0:
        return current
    best = current
    starts = []
    for r in range(restarts):
        start = np.array(Lam)
        start[:, zero_cols] = rng.uniform(-0.5, 0.5, size=(Lam.shape[0], zero_cols.size))
        starts.append(start)
    resid = _residual_start(moments, current.model, zero_cols)
    if resid is not None:
        starts.append(resid)
    for r, start in enumerate(starts):
        try:
            cand = fit(moments, m, rho, spec, FactorModel(start, current.model.psi), options)
        except AscentViolationError:
            raise
        except SparseFactorError as exc:
            warnings.warn(f"restart {r} failed at rho={rho}: {exc}", stacklevel=2)
            continue
        if cand.objective.total > best.objective.total:
            best = cand
    return best


def _residual_start(moments, model, zero_cols):
    R = moments.S - model.covariance()
    e, V = np.linalg.eigh(0.5 * (R + R.T))
    k = zero_cols.size
    e, V = e[::-1][:k], V[:, ::-1][:, :k]
    if e[0] <= 0:
        return None
    start = np.array(model.Lambda)
    start[:, zero_cols] = V * np.sqrt(np.maximum(e, 0.0))
    return start


def null_fit(moments: SampleMoments, m: int, rho: float, spec: PenaltySpec,
             options: SolverOptions | None = None) -> FitResult:
    """The ``Lambda = O`` fixed point, ``psi_i = s_ii (1 + eta)``, as a FitResult."""
    options = options or SolverOptions()
    psi = np.maximum(np.diag(moments.S) * (1.0 + options.eta), options.psi_floor)
    model = FactorModel(np.zeros((moments.p, m)), psi)
    return FitResult(model=model, objective=evaluate(model, moments, rho, spec, options),
                     iterations=0, converged=True, rho=float(rho),
                     rho_star=penalty_level(rho, spec, options), spec=spec)


def fit_path(moments: SampleMoments, m: int, grid: PathGrid | None = None,
             options: SolverOptions | None = None, seed: int = 0,
             init: FactorModel | None = None, restarts: int = N_RESTARTS,
             **grid_kw) -> PathResult:
    """Solution path over ``grid`` (built from ``rho_K`` when omitted).

    A warm start equal to ``O`` is replaced by the one-factor initialization,
    since ``O`` is a stationary point of the likelihood. After every fit the
    factor-expansion check runs with a generator seeded by ``seed``.
    """
    options = options or SolverOptions()
    t0 = time.perf_counter()
    moments.require_positive_diagonal()
    if init is None:
        init = init_loadings(moments, m, options)
    rho_K = None
    if grid is None:
        rho_K = path_rho_max(moments, init, options)
        grid = build_grid(rho_K, **grid_kw)
    rng = np.random.default_rng(seed)
    T, K = grid.shape
    cells = [[None] * K for _ in range(T)]
    timings = []
    for t in range(T):
        ts = time.perf_counter()
        spec = grid.spec(t)
        prev = None
        for k, rho in enumerate(grid.rhos):
            if t == 0:
                start = prev.model if prev is not None else init
            else:
                start = cells[t - 1][k].model
            res = None
            starts = [start]
            if not np.any(start.Lambda):
                # O is stationary: restart from the initialization but keep O if it wins
                res = null_fit(moments, m, float(rho), spec, options)
                starts = [init]
            try:
                for st in starts:
                    cand = fit(moments, m, float(rho), spec, st, options)
                    if res is None or cand.objective.total > res.objective.total:
                        res = cand
                res = maybe_expand_factors(res, moments, m, float(rho), spec, options, rng,
                                           restarts)
            except AscentViolationError as exc:
                raise AscentViolationError(f"cell (t={t}, k={k}): {exc}") from exc
            cells[t][k] = _record(res, moments, grid.gammas[t], float(rho))
            prev = res
        timings.append(time.perf_counter() - ts)
    meta = {
        "seed": seed,
        "options": asdict(options),
        "rho_K": rho_K if rho_K is not None else float(grid.rhos[0]),
        "timings": {"rows": timings, "total": time.perf_counter() - t0},
    }
    return PathResult(cells=cells, grid=grid, N=moments.N, meta=meta)
