import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparsefactor.errors import ParameterError
from sparsefactor.model import FactorModel
from sparsefactor.path import PathCell, PathGrid, PathResult
from sparsefactor.selection import criteria, degrees_of_freedom, select
from sparsefactor.simulation import example_model


def test_df_examples():
    assert degrees_of_freedom(np.zeros((6, 2))) == 0
    assert degrees_of_freedom(example_model()) == 6
    assert degrees_of_freedom(FactorModel(np.ones((5, 3)), np.ones(5))) == 15


def test_df_counts_exact_zeros_only():
    L = np.array([[1e-300, 0.0], [-0.0, 2.0]])
    assert degrees_of_freedom(L) == 2


def test_criteria_arithmetic():
    N = 7
    c = criteria(0.0, 0, N, 8)
    assert c.aic == 16
    assert c.bic == pytest.approx(math.log(N) * 8)
    assert c.caic == pytest.approx((math.log(N) + 1) * 8)


def test_criteria_at_log_n_two(monkeypatch):
    # N = e^2 makes log N = 2: AIC = BIC = 16, CAIC = 24
    import sparsefactor.selection as sel

    monkeypatch.setattr(sel.math, "log", lambda x: 2.0)
    c = sel.criteria(0.0, 0, 8, 8)
    assert (c.aic, c.bic, c.caic) == (16.0, 16.0, 24.0)


@given(st.floats(-1e4, 0), st.integers(0, 50), st.integers(2, 10**6), st.integers(1, 100))
def test_criteria_monotone_in_df(ll, df, N, p):
    a, b = criteria(ll, df, N, p), criteria(ll, df + 1, N, p)
    assert b.aic > a.aic and b.bic > a.bic and b.caic > a.caic
    assert a.caic >= a.bic


def test_bic_heavier_than_aic_from_eight():
    for N in (8, 50, 1000):
        a, b = criteria(-10.0, 3, N, 4), criteria(-10.0, 4, N, 4)
        assert b.bic - a.bic > b.aic - a.aic


def test_criteria_rejects_small_n():
    with pytest.raises(ParameterError):
        criteria(0.0, 0, 1, 3)


class _Fit:
    def __init__(self, model):
        self.model = model


def _path(values, rhos, gammas):
    grid = PathGrid(np.array(rhos), tuple(gammas))
    cells = []
    for t, g in enumerate(gammas):
        row = []
        for k, r in enumerate(rhos):
            ll = values[t][k]
            row.append(PathCell(gamma=g, rho=r, fit=_Fit(example_model()), df=6,
                                criteria=criteria(ll, 6, 50, 6)))
        cells.append(row)
    return PathResult(cells=cells, grid=grid, N=50)


def test_select_single_cell():
    assert select(_path([[-10.0]], [1.0], [math.inf]), "bic") == (0, 0)


def test_select_ties_prefer_larger_rho_then_gamma():
    p = _path([[-5.0, -5.0], [-5.0, -5.0]], [1.0, 0.5], [math.inf, 3.0])
    assert select(p, "bic") == (0, 0)
    p = _path([[-6.0, -5.0], [-6.0, -5.0]], [1.0, 0.5], [math.inf, 3.0])
    assert select(p, "aic") == (0, 1)


def test_select_restricted_rows():
    p = _path([[-6.0, -9.0], [-1.0, -2.0]], [1.0, 0.5], [math.inf, 3.0])
    assert select(p, "bic") == (1, 0)
    assert select(p, "bic", rows=[0]) == (0, 0)


def test_select_shift_invariance():
    vals = [[-7.0, -3.0, -4.0], [-2.0, -8.0, -1.5]]
    p1 = _path(vals, [1.0, 0.5, 0.2], [math.inf, 2.0])
    p2 = _path([[v + 123.0 for v in r] for r in vals], [1.0, 0.5, 0.2], [math.inf, 2.0])
    for c in ("aic", "bic", "caic"):
        assert select(p1, c) == select(p2, c)


def test_select_unknown_criterion():
    with pytest.raises(ParameterError):
        select(_path([[-1.0]], [1.0], [math.inf]), "dic")
