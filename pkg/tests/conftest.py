import warnings

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_lower(rng, D, scale=0.4):
    """Lower-triangular matrix with a positive diagonal in [0.5, 1.5]."""
    L = np.tril(scale * rng.standard_normal((D, D)), -1)
    L[np.diag_indices(D)] = rng.uniform(0.5, 1.5, D)
    return L


def fd_grad(f, x, h=1e-6):
    """Central differences of a scalar function of an array."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[idx] = h
        g[idx] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


@pytest.fixture(autouse=True)
def _quiet_fit_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*objective decreased.*")
        yield


def lingam_data(seed, D=4, N=2000):
    """Pure-noise data ``e = B e + s`` with a full DAG in a shuffled order.

    Returns ``(E, B, order)``; sources are Laplace with random scales.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(D)
    Bo = np.tril(rng.uniform(0.4, 1.0, (D, D)) * rng.choice([-1, 1], (D, D)), -1)
    B = np.zeros((D, D))
    B[np.ix_(order, order)] = Bo
    S = rng.laplace(size=(D, N)) * rng.uniform(0.5, 1.5, D)[:, None]
    E = np.linalg.solve(np.eye(D) - B, S)
    return E, B, tuple(int(i) for i in order)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
