"""Two-step baseline: unpenalized ML factor analysis followed by an
orthogonal rotation (varimax or the L1 component-loss criterion), solved
with the gradient projection algorithm."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .model import FactorModel, SampleMoments
from .penalty import PenaltySpec
from .solver import SolverOptions, fit

N_STARTS = 30
L1_EPS = (1e-6, 1e-7, 1e-8, 1e-9)


@dataclass(frozen=True)
class RotationResult:
    Lambda_rotated: np.ndarray
    T: np.ndarray
    criterion_value: float
    iterations: int
    psi: np.ndarray | None = None


def ml_fit(moments: SampleMoments, m: int, options: SolverOptions | None = None) -> FactorModel:
    """Maximum-likelihood fit (``rho = 0``) from an eigen start on all ``m`` columns."""
    options = options or SolverOptions()
    if m < 1:
        raise ParameterError("m must be at least 1")
    if moments.N <= moments.p:
        warnings.warn(f"N={moments.N} <= p={moments.p}: ML estimates may not exist",
                      stacklevel=2)
    S = moments.S
    s = np.diag(S)
    e, V = np.linalg.eigh(S)
    idx = np.argsort(e)[::-1][:m]
    Lam0 = V[:, idx] * np.sqrt(np.maximum(e[idx], 0.0))
    psi0 = np.maximum(s - np.sum(Lam0**2, axis=1), 0.01 * s)
    res = fit(moments, m, 0.0, PenaltySpec("lasso"), FactorModel(Lam0, psi0), options)
    if not res.converged:
        warnings.warn("ML fit did not converge", stacklevel=2)
    return res.model


def _l1(L, eps):
    r = np.sqrt(L * L + eps * eps)
    return float(np.sum(r)), L / r


def _varimax(L):
    # minimize the negative varimax criterion
    p = L.shape[0]
    L2 = L * L
    dev = L2 - L2.mean(axis=0)
    f = -0.25 * float(np.sum(dev * dev))
    return f, -L * dev


def _gpa(A, T, vgq, max_iter=1000, tol=1e-8):
    L = A @ T
    f, Gq = vgq(L)
    G = A.T @ Gq
    al = 1.0
    it = 0
    for it in range(max_iter):
        M = T.T @ G
        Gp = G - T @ (0.5 * (M + M.T))
        s = np.linalg.norm(Gp)
        if s < tol:
            break
        al *= 2.0
        for _ in range(20):
            U, _, Vt = np.linalg.svd(T - al * Gp)
            Tt = U @ Vt
            ft, Gqt = vgq(A @ Tt)
            if ft < f - 0.5 * s * s * al:
                break
            al /= 2.0
        else:
            break  # no sufficient decrease: stationary to working precision
        T, f, Gq = Tt, ft, Gqt
        G = A.T @ Gq
    return T, f, it + 1


def _random_orthogonal(rng, m):
    Q, R = np.linalg.qr(rng.standard_normal((m, m)))
    return Q * np.sign(np.diag(R))


def _canonical(L, T):
    # sort columns by sum of squares (descending), make the max-|.| entry positive
    order = np.argsort(-np.sum(L * L, axis=0), kind="stable")
    L, T = L[:, order], T[:, order]
    idx = np.argmax(np.abs(L), axis=0)
    sgn = np.sign(L[idx, np.arange(L.shape[1])])
    sgn[sgn == 0] = 1.0
    return L * sgn, T * sgn


def rotate(Lambda, criterion: str = "l1", seed=0, n_starts: int = N_STARTS) -> RotationResult:
    """Orthogonal rotation minimizing the L1 component loss or maximizing varimax.

    The L1 loss is smoothed as ``sqrt(lambda^2 + eps^2)`` and ``eps`` is
    annealed from 1e-6 to 1e-9. The best of ``n_starts`` starts (identity
    plus random orthogonal matrices) is kept.
    """
    A = np.asarray(Lambda, dtype=float)
    p, m = A.shape
    criterion = criterion.lower()
    if criterion not in ("l1", "varimax"):
        raise ParameterError(f"unknown rotation criterion {criterion!r}")
    if m == 1:
        val = float(np.sum(np.abs(A))) if criterion == "l1" else -_varimax(A)[0]
        return RotationResult(A.copy(), np.eye(1), val, 0)
    rng = np.random.default_rng(seed)
    starts = [np.eye(m)] + [_random_orthogonal(rng, m) for _ in range(n_starts - 1)]
    best = None
    for T0 in starts:
        T, its = T0, 0
        if criterion == "l1":
            for eps in L1_EPS:
                T, _, k = _gpa(A, T, lambda L, e=eps: _l1(L, e))
                its += k
            val = float(np.sum(np.abs(A @ T)))
        else:
            T, f, its = _gpa(A, T, _varimax)
            val = -f
        key = val if criterion == "l1" else -val
        if best is None or key < best[0] - 1e-12:
            best = (key, T, val, its)
    _, T, val, its = best
    L, T = _canonical(A @ T, T)
    return RotationResult(L, T, val, its)


def two_step(moments: SampleMoments, m: int, criterion: str = "l1",
             options: SolverOptions | None = None, seed=0) -> RotationResult:
    """ML fit followed by rotation; the ML unique variances ride along in ``psi``."""
    ml = ml_fit(moments, m, options)
    rot = rotate(ml.Lambda, criterion, seed=seed)
    return RotationResult(rot.Lambda_rotated, rot.T, rot.criterion_value,
                          rot.iterations, psi=ml.psi.copy())
