"""Independent reference computations shared by the unit and acceptance tests.

Nothing here calls the closed forms under test.
"""

import math

import numpy as np
from scipy import integrate, stats

GRID = np.arange(-300000, 300001) * 1e-5  # theta in [-3, 3], step 1e-5


def penalty_formula(family, theta, rho, gamma):
    """rho P(|theta|) written out from the family definitions."""
    t = np.abs(np.asarray(theta, dtype=float))
    if family == "lasso" or math.isinf(gamma):
        return rho * t
    if family == "mcp":
        return np.where(t < rho * gamma, rho * t - t * t / (2 * gamma), rho * rho * gamma / 2)
    # scad
    return np.where(
        t <= rho, rho * t,
        np.where(t <= gamma * rho, (2 * gamma * rho * t - t * t - rho * rho) / (2 * (gamma - 1)),
                 rho * rho * (gamma + 1) / 2))


def scad_by_quadrature(theta, rho, gamma):
    """rho * integral_0^|theta| P'(x) dx with the SCAD derivative."""
    def dP(x):
        if x <= rho:
            return 1.0
        return max(gamma * rho - x, 0.0) / ((gamma - 1) * rho)
    t = abs(theta)
    pts = [b for b in (rho, gamma * rho) if b < t]
    val, _ = integrate.quad(dP, 0.0, t, points=pts or None, limit=200)
    return rho * val


def grid_threshold(family, theta_tilde, rho_star, gamma, scale=1.0):
    """Brute-force argmin of 0.5 (x - t)^2 + scale * rho* P(|x|) over GRID."""
    f = 0.5 * (GRID - theta_tilde) ** 2 + scale * penalty_formula(family, GRID, rho_star, gamma)
    return float(GRID[np.argmin(f)])


def calibration_root_scan(rho, gamma, step=1e-6, upper=None):
    """First sign change of Phi(gamma x) - gamma Phi(x) + (gamma - 1) Phi(rho) for x >= rho."""
    upper = upper or 10 * rho * gamma / (gamma - 1) + 5
    lo = rho
    while lo < upper:
        x = lo + step * np.arange(1, 2_000_001)
        r = stats.norm.cdf(gamma * x) - gamma * stats.norm.cdf(x) + (gamma - 1) * stats.norm.cdf(rho)
        idx = np.flatnonzero(r < 0)  # positive at x = rho since Phi(gamma rho) > Phi(rho)
        if idx.size:
            return float(x[idx[0]])
        lo = float(x[-1])
    raise RuntimeError("no root found")


def posterior_sums(model, X):
    """Per-observation E[F|x] and E[F F^T|x] accumulated over centred rows."""
    Lam, psi = model.Lambda, model.psi
    m = Lam.shape[1]
    Sig = Lam @ Lam.T + np.diag(psi)
    W = np.linalg.solve(Sig, Lam)  # Sigma^{-1} Lambda
    V = np.eye(m) - Lam.T @ W  # posterior covariance
    sum_fx = np.zeros((m, X.shape[1]))
    sum_ff = np.zeros((m, m))
    for x in X:
        f = W.T @ x
        sum_fx += np.outer(f, x)
        sum_ff += V + np.outer(f, f)
    return sum_fx, sum_ff


def fd_gradient(model, moments, h=1e-6):
    """Central finite differences of the log-likelihood in each loading."""
    from sparsefactor.model import FactorModel, log_likelihood

    G = np.empty_like(model.Lambda)
    for i in range(model.p):
        for j in range(model.m):
            Lp = np.array(model.Lambda)
            Lp[i, j] += h
            Lm = np.array(model.Lambda)
            Lm[i, j] -= h
            G[i, j] = (log_likelihood(FactorModel(Lp, model.psi), moments)
                       - log_likelihood(FactorModel(Lm, model.psi), moments)) / (2 * h)
    return G
