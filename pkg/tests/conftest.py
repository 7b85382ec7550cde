import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, settings

settings.register_profile(
    "gaplra", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("gaplra")


def random_sparse(d, n, density, seed):
    """Random d x n scipy CSC matrix, standard normal nonzeros."""
    rng = np.random.default_rng(seed)
    return sp.random(d, n, density=density, format="csc", random_state=rng,
                     data_rvs=rng.standard_normal)


def diag_columns(values, d=None):
    """Dense d x len(values) matrix with ``values`` on the diagonal."""
    values = np.asarray(values, dtype=float)
    d = d or values.size
    X = np.zeros((d, values.size))
    X[np.arange(values.size), np.arange(values.size)] = values
    return X


def zoo():
    """Small matrices of assorted shapes and conditioning used across oracle tests."""
    rng = np.random.default_rng(2024)
    mats = {
        "diag": np.diag([3.0, 1.0]),
        "zero": np.zeros((2, 2)),
        "swap": np.array([[0.0, 1.0], [1.0, 0.0]]),
        "tall": rng.standard_normal((30, 7)),
        "wide": rng.standard_normal((6, 25)),
        "square": rng.standard_normal((40, 40)),
        "rank2": rng.standard_normal((20, 2)) @ rng.standard_normal((2, 15)),
        "graded": rng.standard_normal((25, 25)) * np.logspace(0, -10, 25),
        "tied": np.kron(np.eye(3), np.ones((2, 2))),
        "sparse": random_sparse(50, 60, 0.05, 3).toarray(),
        "single": np.array([[2.5]]),
        "row": rng.standard_normal((1, 9)),
        "big": rng.standard_normal((200, 120)),
    }
    return mats


@pytest.fixture(scope="session")
def matrix_zoo():
    return zoo()


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def criterion():
    def record(number, ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
