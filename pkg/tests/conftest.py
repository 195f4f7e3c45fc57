import numpy as np
import pytest

from stiefel_descent.costs import BrockettProblem

R2 = np.sqrt(2.0) / 2
R3 = np.sqrt(3.0) / 3

# starting points of the St(4, 2) reference runs, A = diag(1, 2, 3, 4)
REFERENCE_STARTS = {
    "case1_run1": np.array([[0, R2], [-R2, 0], [0, -R2], [-R2, 0]]),
    "case1_run2": np.array([[0, R3], [-R2, R3], [0, 0], [-R2, -R3]]),
    "case1_run3": np.array([[R3, -R2], [0, 0], [-R3, -R2], [R3, 0]]),
    "case2": np.array([[0.5, 0], [0.5, -R2], [-0.5, 0], [-0.5, -R2]]),
}


def e(i, n):
    """1-based standard basis vector."""
    v = np.zeros(n)
    v[i - 1] = 1.0
    return v


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def brockett_case1():
    return BrockettProblem(np.diag([1.0, 2.0, 3.0, 4.0]), [1.0, 2.0])


@pytest.fixture
def brockett_case2():
    return BrockettProblem(np.diag([1.0, 2.0, 3.0, 4.0]), [1.0, 1.0])
