"""Degrees of freedom, information criteria and best-cell selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

CRITERIA = ("aic", "bic", "caic")


@dataclass(frozen=True)
class CriterionSet:
    aic: float
    bic: float
    caic: float
    df: int

    def __getitem__(self, name):
        return getattr(self, name)


def degrees_of_freedom(model) -> int:
    """Number of loadings that are exactly nonzero."""
    Lam = model.Lambda if hasattr(model, "Lambda") else np.asarray(model)
    return int(np.count_nonzero(Lam))


def criteria(loglik: float, df: int, N: int, p: int) -> CriterionSet:
    """AIC, BIC and CAIC with ``df + p`` free parameters (the unique
    variances are always counted)."""
    if N < 2:
        raise ParameterError("N must be at least 2")
    k = df + p
    logn = math.log(N)
    return CriterionSet(
        aic=-2.0 * loglik + 2.0 * k,
        bic=-2.0 * loglik + logn * k,
        caic=-2.0 * loglik + (logn + 1.0) * k,
        df=int(df),
    )


def select(path, criterion: str = "bic", rows=None):
    """Index ``(t, k)`` of the cell minimizing ``criterion``.

    ``rows`` restricts the search to some gamma rows. Ties go to the larger
    rho (sparser), then to the larger gamma.
    """
    criterion = criterion.lower()
    if criterion not in CRITERIA:
        raise ParameterError(f"unknown criterion {criterion!r}")
    T = len(path.cells)
    rows = range(T) if rows is None else ([rows] if isinstance(rows, int) else rows)
    best, best_key = None, None
    for t in rows:
        for k, cell in enumerate(path.cells[t]):
            # rhos are stored descending and gammas descending, so smaller
            # indices win ties
            key = (cell.criteria[criterion], -cell.rho, -_finite(cell.gamma))
            if best_key is None or key < best_key:
                best, best_key = (t, k), key
    if best is None:
        raise ParameterError("empty path")
    return best


def _finite(g):
    return 1e308 if math.isinf(g) else g
