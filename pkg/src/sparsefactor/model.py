"""Core data types, the Gaussian factor-model likelihood and its gradient.

All covariance algebra uses the low-rank-plus-diagonal structure
Sigma = Lambda Lambda^T + Psi, so nothing here forms or inverts a dense
p x p matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientDataError,
    InvalidDataError,
    ParameterError,
    SingularModelError,
)

LOG_2PI = float(np.log(2.0 * np.pi))
COND_LIMIT = 1e14


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SampleMoments:
    """Sufficient statistics of a Gaussian sample.

    Parameters
    ----------
    S : np.ndarray, shape (p, p)
        Sample covariance matrix (maximum-likelihood denominator ``N``).
    N : int
        Number of observations.
    data : np.ndarray, optional
        The centred data matrix, kept only when the moments were built from
        raw observations. Used by posterior-moment identity checks.
    """

    S: np.ndarray
    N: int
    data: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise InvalidDataError(f"S must be square, got shape {S.shape}")
        if not np.all(np.isfinite(S)):
            raise InvalidDataError("S contains non-finite entries")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidDataError(f"N must be a positive integer, got {self.N}")
        scale = max(float(np.max(np.abs(S))), np.finfo(float).tiny)
        if np.max(np.abs(S - S.T)) > 1e-12 * scale:
            raise InvalidDataError("S is not symmetric")
        S = 0.5 * (S + S.T)
        if np.any(np.diag(S) < 0):
            raise InvalidDataError("S has negative diagonal entries")
        ev = np.linalg.eigvalsh(S)
        if ev[0] < -1e-10 * max(ev[-1], 0.0):
            raise InvalidDataError(
                f"S is not positive semidefinite (min eigenvalue {ev[0]:.3e})"
            )
        object.__setattr__(self, "S", _frozen(S))
        object.__setattr__(self, "N", int(self.N))
        if self.data is not None:
            object.__setattr__(self, "data", _frozen(self.data))

    @property
    def p(self) -> int:
        return self.S.shape[0]

    @property
    def diag(self) -> np.ndarray:
        return np.diag(self.S).copy()

    def require_positive_diagonal(self):
        """Raise if any variable has zero sample variance."""
        bad = np.flatnonzero(np.diag(self.S) <= 0)
        if bad.size:
            raise InvalidDataError(
                f"variables {bad.tolist()} have zero sample variance"
            )

    def scaled(self, c: float) -> "SampleMoments":
        return SampleMoments(self.S * c, self.N)


@dataclass(frozen=True)
class FactorModel:
    """Orthogonal factor model ``Sigma = Lambda Lambda^T + diag(psi)``."""

    Lambda: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        L = np.asarray(self.Lambda, dtype=float)
        if L.ndim == 1:
            L = L[:, None]
        psi = np.asarray(self.psi, dtype=float).ravel()
        if L.ndim != 2 or L.shape[1] < 1:
            raise ParameterError(f"Lambda must be p x m with m >= 1, got {L.shape}")
        if L.shape[0] != psi.shape[0]:
            raise ParameterError(
                f"Lambda has {L.shape[0]} rows but psi has length {psi.shape[0]}"
            )
        if not (np.all(np.isfinite(L)) and np.all(np.isfinite(psi))):
            raise InvalidDataError("model parameters contain non-finite values")
        if np.any(psi <= 0):
            raise ParameterError("unique variances must be strictly positive")
        object.__setattr__(self, "Lambda", _frozen(L))
        object.__setattr__(self, "psi", _frozen(psi))

    @property
    def p(self) -> int:
        return self.Lambda.shape[0]

    @property
    def m(self) -> int:
        return self.Lambda.shape[1]

    def covariance(self) -> np.ndarray:
        """Dense implied covariance. O(p^2 m); for reporting and tests."""
        return self.Lambda @ self.Lambda.T + np.diag(self.psi)

    def nonzero_columns(self) -> int:
        return int(np.count_nonzero(np.any(self.Lambda != 0, axis=0)))


@dataclass(frozen=True)
class PenalizedObjectiveValue:
    loglik: float
    penalty: float
    eta_term: float
    total: float

    @classmethod
    def from_parts(cls, loglik, penalty, eta_term):
        return cls(float(loglik), float(penalty), float(eta_term),
                   float(loglik - penalty - eta_term))


def sample_covariance(data, standardize: bool = False) -> SampleMoments:
    """Maximum-likelihood sample covariance of an ``N x p`` data matrix.

    The divisor is ``N``, not ``N - 1``. With ``standardize=True`` the data
    are scaled to unit variance first, so ``S`` is the correlation matrix.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidDataError(f"data must be a 2-D array, got {X.ndim}-D")
    if not np.all(np.isfinite(X)):
        raise InvalidDataError("data contain non-finite values")
    N = X.shape[0]
    if N < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {N}")
    if X.shape[1] < 1:
        raise InvalidDataError("data have no columns")
    Xc = X - X.mean(axis=0)
    if standardize:
        sd = np.sqrt(np.mean(Xc**2, axis=0))
        if np.any(sd == 0):
            raise InvalidDataError("cannot standardize a constant column")
        Xc = Xc / sd
    S = Xc.T @ Xc / N
    return SampleMoments(S, N, data=Xc)


def _check_dims(model: FactorModel, moments: SampleMoments):
    if model.p != moments.p:
        raise ParameterError(
            f"model has p={model.p} but moments have p={moments.p}"
        )


def _condition_estimate(model: FactorModel) -> float:
    # lambda_max(Sigma) <= max psi + ||Lambda||_F^2, lambda_min >= min psi
    return (model.psi.max() + float(np.sum(model.Lambda**2))) / model.psi.min()


def _woodbury_parts(model: FactorModel):
    if _condition_estimate(model) > COND_LIMIT:
        raise SingularModelError(
            f"implied covariance is numerically singular "
            f"(min psi = {model.psi.min():.3e})"
        )
    PiL = model.Lambda / model.psi[:, None]
    M = model.Lambda.T @ PiL + np.eye(model.m)
    chol = np.linalg.cholesky(M)
    logdet_M = 2.0 * np.sum(np.log(np.diag(chol)))
    return PiL, M, chol, logdet_M


def _chol_solve(chol, B):
    y = np.linalg.solve(chol, B)
    return np.linalg.solve(chol.T, y)


def log_likelihood(model: FactorModel, moments: SampleMoments) -> float:
    """Gaussian log-likelihood of the factor model at sample moments ``S``.

    Uses the determinant lemma ``|Sigma| = |Psi| |M|`` and the Woodbury
    form of ``Sigma^{-1}``, with ``M = Lambda^T Psi^{-1} Lambda + I``.
    """
    _check_dims(model, moments)
    S = moments.S
    PiL, M, chol, logdet_M = _woodbury_parts(model)
    logdet = float(np.sum(np.log(model.psi))) + logdet_M
    C = PiL.T @ S @ PiL  # m x m
    trace = float(np.sum(np.diag(S) / model.psi)) - float(
        np.trace(_chol_solve(chol, C))
    )
    return -0.5 * moments.N * (moments.p * LOG_2PI + logdet + trace)


def _sigma_inv_apply(model, PiL, chol, X):
    """Sigma^{-1} X via Woodbury."""
    X = np.asarray(X, dtype=float)
    return X / model.psi[:, None] - PiL @ _chol_solve(chol, PiL.T @ X)


def loading_gradient(model: FactorModel, moments: SampleMoments) -> np.ndarray:
    """Gradient of the log-likelihood with respect to ``Lambda``.

    ``d l / d Lambda = -N Sigma^{-1} (Sigma - S) Sigma^{-1} Lambda``.
    """
    _check_dims(model, moments)
    PiL, M, chol, _ = _woodbury_parts(model)
    # Sigma^{-1} Lambda = Psi^{-1} Lambda M^{-1}
    W = _chol_solve(chol, PiL.T).T
    SW = moments.S @ W
    return -moments.N * (W - _sigma_inv_apply(model, PiL, chol, SW))


def penalized_objective(model, moments, spec, rho, eta=0.0) -> PenalizedObjectiveValue:
    """Penalized log-likelihood with the improper-solution guard.

    ``total = loglik - N * sum_ij rho P(|lambda_ij|) - (N/2) eta sum_i s_ii / psi_i``
    """
    from .penalty import penalty_value

    if rho < 0 or eta < 0:
        raise ParameterError("rho and eta must be non-negative")
    ll = log_likelihood(model, moments)
    if rho == 0:
        pen = 0.0
    else:
        pen = moments.N * float(np.sum(penalty_value(spec, model.Lambda, rho)))
    eta_term = 0.5 * moments.N * eta * float(np.sum(np.diag(moments.S) / model.psi))
    return PenalizedObjectiveValue.from_parts(ll, pen, eta_term)


def posterior_scores(model: FactorModel, x) -> np.ndarray:
    """Posterior mean of the common factors, ``M^{-1} Lambda^T Psi^{-1} x``.

    ``x`` may be a single length-p vector or an ``n x p`` matrix of rows; the
    reconstruction of ``x`` is ``Lambda @ scores``.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidDataError("x contains non-finite values")
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != model.p:
        raise ParameterError(f"x has {X.shape[1]} variables, model has {model.p}")
    PiL = model.Lambda / model.psi[:, None]
    M = model.Lambda.T @ PiL + np.eye(model.m)
    scores = np.linalg.solve(M, PiL.T @ X.T).T
    return scores[0] if single else scores
