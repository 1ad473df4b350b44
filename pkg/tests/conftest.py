import hypothesis
import numpy as np
import pytest

from sparsefactor.model import FactorModel, sample_covariance
from sparsefactor.simulation import example_model, generate

hypothesis.settings.register_profile("default", deadline=None, max_examples=50)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("default")


def random_model(rng, p, m, scale=0.8):
    Lam = rng.uniform(-scale, scale, size=(p, m))
    psi = rng.uniform(0.2, 1.0, size=p)
    return FactorModel(Lam, psi)


def dense_loglik(model, S, N):
    """Direct evaluation forming Sigma and its inverse."""
    Sig = model.Lambda @ model.Lambda.T + np.diag(model.psi)
    p = S.shape[0]
    _, logdet = np.linalg.slogdet(Sig)
    return -0.5 * N * (p * np.log(2 * np.pi) + logdet + np.trace(np.linalg.inv(Sig) @ S))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def example_data():
    """One two-factor simple-structure data set (N = 50) and its moments."""
    X = generate(example_model(), 50, 7)
    return X, sample_covariance(X)


ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion and fail if it is red."""

    def record(number, name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {name}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
