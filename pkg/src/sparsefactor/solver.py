"""Penalized EM for the factor model.

E-step: posterior moments of the common factors summarised by
``M = Lambda^T Psi^{-1} Lambda + I``, ``B = M^{-1} Lambda^T Psi^{-1} S`` and
``A = M^{-1} + B Psi^{-1} Lambda M^{-1}``.  M-step: coordinate descent over
each row of ``Lambda`` (rows decouple given ``A``), then a closed-form
``Psi`` update that includes the ``eta`` guard.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import AscentViolationError, NumericalError, ParameterError
from .model import (
    LOG_2PI,
    FactorModel,
    PenalizedObjectiveValue,
    SampleMoments,
    penalized_objective,
)
from .penalty import PenaltySpec, _pen, _scaled_thr, reparameterize_rho

# status codes returned by the compiled EM loop
_CONVERGED, _MAX_ITER, _ASCENT, _NUMERICAL = 0, 1, 2, 3


class FloorWarning(UserWarning):
    """A unique variance hit ``psi_floor`` (near-improper solution)."""


@dataclass(frozen=True)
class SolverOptions:
    eta: float = 0.001
    em_tol: float = 1e-7
    em_max_iter: int = 2000
    cd_tol: float = 1e-7
    cd_max_sweeps: int = 500
    psi_floor: float = 1e-6
    reparameterize: bool = True

    def __post_init__(self):
        if self.eta < 0:
            raise ParameterError("eta must be non-negative")
        for name in ("em_tol", "cd_tol", "psi_floor"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.em_max_iter < 1 or self.cd_max_sweeps < 1:
            raise ParameterError("iteration limits must be positive")


@dataclass(frozen=True)
class EStepCache:
    M: np.ndarray
    B: np.ndarray
    A: np.ndarray


@dataclass(frozen=True)
class FitResult:
    model: FactorModel
    objective: PenalizedObjectiveValue
    iterations: int
    converged: bool
    rho: float = 0.0
    rho_star: float = 0.0
    spec: PenaltySpec = field(default_factory=PenaltySpec)
    history: np.ndarray = field(default=None, repr=False, compare=False)
    floor_hits: int = 0

    @property
    def df(self) -> int:
        return int(np.count_nonzero(self.model.Lambda))


# ---------------------------------------------------------------- kernels


@numba.njit(cache=True)
def _estep_kernel(Lam, psi, S):
    p, m = Lam.shape
    PiL = np.empty((p, m))
    for i in range(p):
        for j in range(m):
            PiL[i, j] = Lam[i, j] / psi[i]
    M = Lam.T @ PiL + np.eye(m)
    L = np.linalg.cholesky(M)
    logdet_M = 0.0
    for j in range(m):
        logdet_M += 2.0 * math.log(L[j, j])
    Minv = np.linalg.inv(M)
    Minv = 0.5 * (Minv + Minv.T)
    C = np.ascontiguousarray(PiL.T) @ S  # m x p
    B = Minv @ C
    CPL = C @ PiL  # Lambda^T Psi^-1 S Psi^-1 Lambda
    A = Minv + B @ PiL @ Minv
    A = 0.5 * (A + A.T)
    return M, Minv, B, A, CPL, logdet_M


@numba.njit(cache=True)
def _loglik_kernel(psi, sdiag, Minv, CPL, logdet_M, N):
    p = psi.size
    logdet = logdet_M
    tr = 0.0
    for i in range(p):
        logdet += math.log(psi[i])
        tr += sdiag[i] / psi[i]
    m = Minv.shape[0]
    for a in range(m):
        for b in range(m):
            tr -= Minv[a, b] * CPL[b, a]
    return -0.5 * N * (p * LOG_2PI + logdet + tr)


@numba.njit(cache=True)
def _penalty_sum(Lam, code, rho, gamma):
    if rho == 0.0:
        return 0.0
    s = 0.0
    p, m = Lam.shape
    for i in range(p):
        for j in range(m):
            if Lam[i, j] != 0.0:
                s += _pen(code, Lam[i, j], rho, gamma)
    return s


@numba.njit(cache=True)
def _coord(Lam, i, j, B, A, psi_i, code, rho, gamma):
    m = Lam.shape[1]
    r = B[j, i]
    for k in range(m):
        if k != j:
            r -= A[k, j] * Lam[i, k]
    ajj = A[j, j]
    return _scaled_thr(code, r / ajj, rho, gamma, psi_i / ajj)


@numba.njit(cache=True)
def _cd_kernel(Lam, B, A, psi, code, rho, gamma, cd_tol, cd_max_sweeps):
    # rows are independent given (B, A, psi); each row is swept until its
    # largest coordinate change is below cd_tol
    p, m = Lam.shape
    total = 0
    for i in range(p):
        for sweep in range(cd_max_sweeps):
            chg = 0.0
            for j in range(m):
                new = _coord(Lam, i, j, B, A, psi[i], code, rho, gamma)
                d = abs(new - Lam[i, j])
                if d > chg:
                    chg = d
                Lam[i, j] = new
            if chg <= cd_tol:
                break
        total = max(total, sweep + 1)
    return total


@numba.njit(cache=True)
def _psi_kernel(sdiag, B, A, Lam, eta, floor, out):
    p, m = Lam.shape
    hits = 0
    for i in range(p):
        v = sdiag[i] * (1.0 + eta)
        for j in range(m):
            lij = Lam[i, j]
            if lij == 0.0:
                continue
            v -= 2.0 * lij * B[j, i]
            for k in range(m):
                v += lij * A[j, k] * Lam[i, k]
        if v < floor:
            v = floor
            hits += 1
        out[i] = v
    return hits


@numba.njit(cache=True)
def _collapse_singletons(Lam, psi):
    # a column with a single nonzero entry is never optimal: moving its
    # square into psi keeps Sigma, lowers the penalty and the eta term
    p, m = Lam.shape
    changed = False
    for j in range(m):
        cnt = 0
        idx = -1
        for i in range(p):
            if Lam[i, j] != 0.0:
                cnt += 1
                idx = i
        if cnt == 1:
            psi[idx] += Lam[idx, j] * Lam[idx, j]
            Lam[idx, j] = 0.0
            changed = True
    return changed


@numba.njit(cache=True)
def _em_kernel(S, N, Lam, psi, code, rho, gamma, eta, em_tol, em_max_iter,
               cd_tol, cd_max_sweeps, floor, trap_abs, trap_rel):
    p = S.shape[0]
    sdiag = np.empty(p)
    for i in range(p):
        sdiag[i] = S[i, i]
    eta_w = 0.5 * N * eta
    hist = np.empty(em_max_iter + 1)
    status = _MAX_ITER
    hits = 0
    prev = -np.inf
    it = 0
    new_psi = np.empty(p)
    parts = np.zeros(3)
    while True:
        M, Minv, B, A, CPL, logdet_M = _estep_kernel(Lam, psi, S)
        ll = _loglik_kernel(psi, sdiag, Minv, CPL, logdet_M, N)
        pen = N * _penalty_sum(Lam, code, rho, gamma)
        et = 0.0
        for i in range(p):
            et += sdiag[i] / psi[i]
        et *= eta_w
        obj = ll - pen - et
        if not np.isfinite(obj):
            status = _NUMERICAL
            break
        hist[it] = obj
        parts[0] = ll
        parts[1] = pen
        parts[2] = et
        if it > 0:
            if obj < prev - (trap_abs + trap_rel * abs(prev)):
                status = _ASCENT
                break
            if abs(obj - prev) <= em_tol * abs(prev):
                if it < em_max_iter and _collapse_singletons(Lam, psi):
                    prev = obj
                    it += 1
                    continue
                status = _CONVERGED
                break
        if it == em_max_iter:
            break
        prev = obj
        _cd_kernel(Lam, B, A, psi, code, rho, gamma, cd_tol, cd_max_sweeps)
        h = _psi_kernel(sdiag, B, A, Lam, eta, floor, new_psi)
        if h > 0:
            hits = h
        for i in range(p):
            psi[i] = new_psi[i]
        it += 1
    return status, it, hist[: it + 1].copy(), hits, parts


# ------------------------------------------------------------ public API


def e_step(model: FactorModel, moments: SampleMoments) -> EStepCache:
    """Posterior-moment summaries of the common factors at ``model``.

    ``sum_n E[F_n] x_ni = N b_i`` and ``sum_n E[F_n F_n^T] = N A``.
    """
    try:
        M, _, B, A, _, _ = _estep_kernel(
            np.array(model.Lambda), np.array(model.psi), np.ascontiguousarray(moments.S)
        )
    except Exception as exc:  # numba raises a plain LinAlgError
        raise NumericalError(
            f"Cholesky of M failed (min psi = {model.psi.min():.3e})"
        ) from exc
    return EStepCache(M=M, B=B, A=A)


def coordinate_update(lambda_row, j: int, cache: EStepCache, psi_i: float,
                      rho: float, spec: PenaltySpec, i: int = 0) -> float:
    """Maximize the expected complete-data objective over ``lambda_ij``.

    Minimizes ``(1/(2 psi_i)) (a_jj x^2 - 2 r x) + rho P(|x|)`` with
    ``r = b_ij - sum_{k != j} a_kj lambda_ik``. ``rho`` is the penalty level
    actually in the objective (already calibrated for ``spec.gamma``).
    For the lasso this is the soft threshold of ``r / a_jj`` at
    ``psi_i rho / a_jj``.
    """
    row = np.array(lambda_row, dtype=float)[None, :]
    if not cache.A[j, j] > 0:
        raise NumericalError("a_jj must be positive")
    B = np.ascontiguousarray(cache.B[:, [i]])
    return float(_coord(row, 0, j, B, np.ascontiguousarray(cache.A), float(psi_i),
                        spec.code, float(rho), spec.gamma))


def m_step(cache: EStepCache, moments: SampleMoments, model_in: FactorModel,
           rho: float, spec: PenaltySpec, options: SolverOptions | None = None) -> FactorModel:
    """One M-step: coordinate descent on ``Lambda`` then the ``Psi`` update.

    ``psi_i = s_ii - 2 lambda_i^T b_i + lambda_i^T A lambda_i + eta s_ii``,
    floored at ``options.psi_floor`` (a :class:`FloorWarning` is issued).
    """
    options = options or SolverOptions()
    Lam = np.array(model_in.Lambda)
    psi = np.array(model_in.psi)
    B = np.ascontiguousarray(cache.B)
    A = np.ascontiguousarray(cache.A)
    _cd_kernel(Lam, B, A, psi, spec.code, float(rho), spec.gamma,
               options.cd_tol, options.cd_max_sweeps)
    new_psi = np.empty_like(psi)
    hits = _psi_kernel(np.diag(moments.S).copy(), B, A, Lam, options.eta,
                       options.psi_floor, new_psi)
    if hits:
        warnings.warn(f"{hits} unique variance(s) floored at {options.psi_floor}",
                      FloorWarning, stacklevel=2)
    return FactorModel(Lam, new_psi)


def penalty_level(rho: float, spec: PenaltySpec, options: SolverOptions | None = None) -> float:
    """Penalty level used in the objective: ``rho`` calibrated to ``spec.gamma``."""
    options = options or SolverOptions()
    if spec.is_lasso or not options.reparameterize:
        return float(rho)
    return reparameterize_rho(rho, spec.gamma)


def fit(moments: SampleMoments, m: int, rho: float, spec: PenaltySpec,
        init: FactorModel, options: SolverOptions | None = None) -> FitResult:
    """Maximize the penalized log-likelihood at fixed ``(rho, gamma)`` by EM.

    Parameters
    ----------
    moments : SampleMoments
    m : int
        Number of factors; must match ``init``.
    rho : float
        Lasso-scale regularization parameter. For concave families it is
        mapped through :func:`~sparsefactor.penalty.reparameterize_rho`
        unless ``options.reparameterize`` is false.
    spec : PenaltySpec
    init : FactorModel
        Starting point. ``Lambda = O`` is a stationary point and is rejected.
    options : SolverOptions, optional

    Returns
    -------
    FitResult
        ``history`` holds the penalized objective at every iterate; it is
        non-decreasing up to round-off.
    """
    options = options or SolverOptions()
    moments.require_positive_diagonal()
    if rho < 0 or not math.isfinite(rho):
        raise ParameterError(f"rho must be finite and non-negative, got {rho}")
    if init.m != m or init.p != moments.p:
        raise ParameterError(
            f"init has shape {init.Lambda.shape}, expected ({moments.p}, {m})"
        )
    if not np.any(init.Lambda):
        raise ParameterError("Lambda = O is a stationary point; supply a nonzero start")
    rho_star = penalty_level(rho, spec, options)
    Lam = np.array(init.Lambda)
    psi = np.maximum(np.array(init.psi), options.psi_floor)
    status, it, hist, hits, parts = _em_kernel(
        np.ascontiguousarray(moments.S), float(moments.N), Lam, psi, spec.code,
        rho_star, spec.gamma, options.eta, options.em_tol, options.em_max_iter,
        options.cd_tol, options.cd_max_sweeps, options.psi_floor, 1e-8, 1e-13,
    )
    if status == _ASCENT:
        raise AscentViolationError(
            f"objective decreased from {hist[-2]:.12g} to {hist[-1]:.12g} "
            f"at iteration {it} (rho={rho}, gamma={spec.gamma})"
        )
    if status == _NUMERICAL:
        raise NumericalError(f"non-finite objective at iteration {it}")
    if hits:
        warnings.warn(f"{hits} unique variance(s) floored at {options.psi_floor}",
                      FloorWarning, stacklevel=2)
    model = FactorModel(Lam, psi)
    obj = PenalizedObjectiveValue.from_parts(*parts)
    return FitResult(model=model, objective=obj, iterations=int(it),
                     converged=status == _CONVERGED, rho=float(rho),
                     rho_star=float(rho_star), spec=spec, history=hist,
                     floor_hits=int(hits))


def evaluate(model: FactorModel, moments: SampleMoments, rho: float,
             spec: PenaltySpec, options: SolverOptions | None = None) -> PenalizedObjectiveValue:
    """Objective of ``model`` as :func:`fit` scores it (calibrated penalty level)."""
    options = options or SolverOptions()
    return penalized_objective(model, moments, spec, penalty_level(rho, spec, options),
                               options.eta)
