"""Penalty families, their scalar threshold operators and the
degrees-of-freedom calibration that moves a lasso-scale ``rho`` across
the concavity family.

Scalar kernels are compiled with numba so the solver can call them from
its inner loops; the public functions below wrap them with validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import CalibrationError, ParameterError

LASSO, SCAD, MCP = 0, 1, 2
FAMILIES = {"lasso": LASSO, "scad": SCAD, "mcp": MCP}
GAMMA_MIN = {"scad": 2.0, "mcp": 1.0}
HARD_GAMMA = 1.01


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family and concavity ``gamma``.

    ``gamma = inf`` gives the lasso for every family. SCAD needs
    ``gamma > 2`` and MC+ needs ``gamma > 1``.
    """

    family: str = "lasso"
    gamma: float = math.inf

    def __post_init__(self):
        fam = str(self.family).lower()
        if fam == "mc+":
            fam = "mcp"
        if fam not in FAMILIES:
            raise ParameterError(f"unknown penalty family {self.family!r}")
        gamma = float(self.gamma)
        if fam == "lasso":
            gamma = math.inf
        elif math.isnan(gamma):
            raise ParameterError("gamma is NaN")
        elif fam == "mcp" and gamma <= 1.0 + 1e-8:
            raise ParameterError(f"MC+ requires gamma > 1, got {gamma}")
        elif fam == "scad" and gamma <= 2.0:
            raise ParameterError(f"SCAD requires gamma > 2, got {gamma}")
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def from_name(cls, name: str, gamma: float = math.inf) -> "PenaltySpec":
        """Build a spec from a CLI-style name; ``"hard"`` is MC+ at gamma=1.01."""
        if name.lower() == "hard":
            return cls("mcp", HARD_GAMMA)
        return cls(name, gamma)

    @property
    def code(self) -> int:
        if math.isinf(self.gamma):
            return LASSO
        return FAMILIES[self.family]

    @property
    def is_lasso(self) -> bool:
        return self.code == LASSO

    def with_gamma(self, gamma: float) -> "PenaltySpec":
        return PenaltySpec(self.family, gamma)


@numba.njit(cache=True)
def _pen(code, theta, rho, gamma):
    a = abs(theta)
    if code == LASSO:
        return rho * a
    if code == MCP:
        if a < rho * gamma:
            return rho * a - a * a / (2.0 * gamma)
        return 0.5 * rho * rho * gamma
    # SCAD
    if a <= rho:
        return rho * a
    if a <= gamma * rho:
        return (2.0 * gamma * rho * a - a * a - rho * rho) / (2.0 * (gamma - 1.0))
    return 0.5 * rho * rho * (gamma + 1.0)


@numba.njit(cache=True)
def _soft(t, r):
    a = abs(t) - r
    if a <= 0.0:
        return 0.0
    return a if t > 0 else -a


@numba.njit(cache=True)
def _thr(code, t, rho, gamma):
    # closed forms for argmin 0.5 (x - t)^2 + rho P(|x|; rho, gamma)
    a = abs(t)
    if code == LASSO:
        return _soft(t, rho)
    if code == MCP:
        if a <= rho * gamma:
            return _soft(t, rho) / (1.0 - 1.0 / gamma)
        return t
    if a <= 2.0 * rho:
        return _soft(t, rho)
    if a <= rho * gamma:
        s = 1.0 if t > 0 else -1.0
        return ((gamma - 1.0) * t - s * rho * gamma) / (gamma - 2.0)
    return t


@numba.njit(cache=True)
def _scaled_thr(code, t, rho, gamma, scale):
    """Exact argmin of 0.5 (x - t)^2 + scale * rho P(|x|; rho, gamma).

    Enumerates the stationary points of each quadratic piece (or its
    endpoints when the piece is concave). Ties go to the smaller |x|.
    """
    a = abs(t)
    if code == LASSO:
        x = a - scale * rho
        if x <= 0.0:
            return 0.0
        return x if t > 0 else -x
    cands = np.empty(5)
    n = 0
    cands[n] = 0.0
    n += 1
    if code == MCP:
        hi = rho * gamma
        k = 1.0 - scale / gamma
        if k > 0.0:
            x = (a - scale * rho) / k
            cands[n] = min(max(x, 0.0), hi)
            n += 1
        else:
            cands[n] = hi
            n += 1
        cands[n] = max(a, hi)
        n += 1
    else:
        cands[n] = min(max(a - scale * rho, 0.0), rho)
        n += 1
        hi = gamma * rho
        k = 1.0 - scale / (gamma - 1.0)
        if k > 0.0:
            x = (a - scale * gamma * rho / (gamma - 1.0)) / k
            cands[n] = min(max(x, rho), hi)
            n += 1
        else:
            cands[n] = rho
            n += 1
            cands[n] = hi
            n += 1
        cands[n] = max(a, hi)
        n += 1
    best = 0.0
    best_f = 0.5 * a * a
    for q in range(1, n):
        x = cands[q]
        f = 0.5 * (x - a) * (x - a) + scale * _pen(code, x, rho, gamma)
        if f < best_f or (f == best_f and x < best):
            best_f = f
            best = x
    return best if t > 0 else -best


@numba.njit(cache=True)
def _pen_array(code, x, rho, gamma):
    out = np.empty(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        out[i] = _pen(code, flat[i], rho, gamma)
    return out


@numba.njit(cache=True)
def _thr_array(code, x, rho, gamma):
    out = np.empty(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        out[i] = _thr(code, flat[i], rho, gamma)
    return out


def penalty_value(spec: PenaltySpec, theta, rho: float):
    """``rho * P(|theta|; rho, gamma)`` elementwise.

    lasso: ``rho |theta|``. MC+: ``rho |theta| - theta^2 / (2 gamma)`` below
    ``rho gamma``, then the constant ``rho^2 gamma / 2``. SCAD: the integral of
    its derivative, saturating at ``rho^2 (gamma + 1) / 2``.
    """
    if rho < 0:
        raise ParameterError(f"rho must be non-negative, got {rho}")
    arr = np.asarray(theta, dtype=float)
    out = _pen_array(spec.code, np.ascontiguousarray(arr), float(rho), spec.gamma)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def threshold(spec: PenaltySpec, theta_tilde, rho_star: float):
    """Solve ``argmin_x 0.5 (x - theta_tilde)^2 + rho_star P(|x|)`` in closed form."""
    if rho_star < 0:
        raise ParameterError(f"rho_star must be non-negative, got {rho_star}")
    arr = np.asarray(theta_tilde, dtype=float)
    out = _thr_array(spec.code, np.ascontiguousarray(arr), float(rho_star), spec.gamma)
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def scaled_threshold(spec: PenaltySpec, theta_tilde: float, rho: float, scale: float) -> float:
    """Exact minimizer of ``0.5 (x - t)^2 + scale * rho P(|x|; rho, gamma)``.

    This is the coordinate subproblem of the M-step with ``scale = psi_i / a_jj``.
    For ``scale = 1`` it coincides with :func:`threshold`.
    """
    if scale <= 0:
        raise ParameterError("scale must be positive")
    return float(_scaled_thr(spec.code, float(theta_tilde), float(rho), spec.gamma, float(scale)))


def _upper_tail(x):
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def calibration_residual(x: float, rho: float, gamma: float) -> float:
    """``Phi(gamma x) - gamma Phi(x) + (gamma - 1) Phi(rho)``, written with
    upper tails for accuracy. Its root in ``x`` is the concave-family
    parameter whose thresholding has the same degrees of freedom as the
    lasso at ``rho``."""
    return gamma * _upper_tail(x) - _upper_tail(gamma * x) - (gamma - 1.0) * _upper_tail(rho)


def reparameterize_rho(rho: float, gamma: float, tol: float = 1e-10) -> float:
    """Map a lasso-scale ``rho`` to the calibrated value at concavity ``gamma``.

    Bisection starting from the bracket ``[rho, 50 rho gamma / (gamma - 1)]``;
    the upper end is doubled until the residual changes sign. Returns ``rho``
    unchanged for ``gamma = inf``.
    """
    if rho < 0 or not math.isfinite(rho):
        raise ParameterError(f"rho must be finite and non-negative, got {rho}")
    if math.isinf(gamma) or rho == 0.0:
        return float(rho)
    if not gamma > 1.0:
        raise ParameterError(f"gamma must exceed 1, got {gamma}")
    lo = float(rho)
    hi = 50.0 * rho * gamma / (gamma - 1.0)
    f_lo = calibration_residual(lo, rho, gamma)
    if f_lo <= 0.0:
        # Phi(gamma rho) == Phi(rho) in floating point: calibration is flat
        return float(rho)
    for _ in range(200):
        if calibration_residual(hi, rho, gamma) < 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise CalibrationError(
            f"no sign change when calibrating rho={rho}, gamma={gamma}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if calibration_residual(mid, rho, gamma) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
