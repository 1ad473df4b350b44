import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sparsefactor.errors import ParameterError
from sparsefactor.model import FactorModel, sample_covariance
from sparsefactor.simulation import (
    StudyConfig,
    align,
    example_model,
    find_row,
    generate,
    metrics,
    model_a,
    model_b,
    replication_metrics,
    run_study,
)


def test_model_constants():
    a = model_a()
    assert np.allclose(np.diag(a.covariance()), 1.0)
    assert np.allclose(a.psi, 1 - np.array([.95, .9, .85, .8, .75, .7]) ** 2)
    b = model_b()
    assert b.Lambda.shape == (1000, 4)
    assert np.count_nonzero(b.Lambda) == 1000
    assert np.allclose(np.diag(b.covariance()), 1.0)
    e = example_model()
    assert np.allclose(e.psi, 0.32) and np.count_nonzero(e.Lambda) == 6


def test_generator_law_of_large_numbers():
    truth = model_a()
    S = sample_covariance(generate(truth, 100000, 11)).S
    assert np.max(np.abs(S - truth.covariance())) < 0.02


def test_generator_null_loadings():
    m = FactorModel(np.zeros((4, 2)), np.array([1.0, 2.0, 3.0, 4.0]))
    S = sample_covariance(generate(m, 50000, 3)).S
    assert np.allclose(np.diag(S), m.psi, rtol=0.05)
    assert np.max(np.abs(S - np.diag(np.diag(S)))) < 0.05


def test_generator_deterministic():
    assert np.array_equal(generate(model_a(), 10, 4), generate(model_a(), 10, 4))


def test_align_swapped_negated():
    t = model_a()
    est = FactorModel(np.column_stack([-t.Lambda[:, 1], t.Lambda[:, 0]]), t.psi)
    assert np.array_equal(align(est, t).Lambda, t.Lambda)


@settings(max_examples=30)
@given(st.integers(0, 10**6))
def test_align_matches_brute_force(seed):
    from itertools import permutations

    rng = np.random.default_rng(seed)
    t = FactorModel(rng.standard_normal((6, 3)), np.ones(6))
    est = FactorModel(rng.standard_normal((6, 3)), np.ones(6))
    score = np.abs(t.Lambda.T @ est.Lambda)
    best = max(sum(score[i, p[i]] for i in range(3)) for p in permutations(range(3)))
    got = align(est, t)
    assert np.sum(got.Lambda * t.Lambda) == pytest.approx(best, rel=1e-12)


def test_metrics_trivial():
    t = model_a()
    m = metrics([t], t)
    assert (m.mse_lambda, m.mse_psi, m.tpr, m.tnr) == (0.0, 0.0, 1.0, 1.0)
    dense = FactorModel(np.full((6, 2), 0.5), t.psi)
    r = replication_metrics(dense, t)
    assert r[2] == 1.0 and r[3] == 0.0
    null = FactorModel(np.zeros((6, 2)), t.psi)
    r = replication_metrics(null, t)
    assert r[2] == 0.0 and r[3] == 1.0
    assert r[0] == pytest.approx(np.sum(t.Lambda**2) / 12)


def test_metrics_average_and_se():
    t = model_a()
    null = FactorModel(np.zeros((6, 2)), t.psi)
    m = metrics([t, null], t)
    assert m.tpr == 0.5 and m.n == 2
    assert m.se_tpr == pytest.approx(0.5)


def test_config_validation():
    with pytest.raises(ParameterError):
        StudyConfig(replications=0)
    with pytest.raises(ParameterError):
        StudyConfig(criteria=("dic",))
    with pytest.raises(ParameterError):
        StudyConfig(model="Z").truth()


def test_study_deterministic_and_thread_free():
    cfg = dict(model="A", N=100, replications=3, gammas=(3.0,), K=10, seed=2)
    a = run_study(StudyConfig(**cfg))
    b = run_study(StudyConfig(**cfg, threads=2))
    assert json.dumps(a, sort_keys=True, default=str) == json.dumps(b, sort_keys=True, default=str)
    row = find_row(a, "lasso", "bic")
    assert row["n"] == 3 and 0 <= row["tnr"] <= 1
    assert a["succeeded"] == 3 and a["failed"] == 0
    assert {r["method"] for r in a["rows"]} == {"lasso", "mcp(gamma=3)"}
