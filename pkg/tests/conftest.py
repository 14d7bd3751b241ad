import numpy as np
import pytest

from pgkbreg.operators import InnerSolveConfig, LinearOperator
from pgkbreg.problems import first_difference


def random_pair(m, n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    L = first_difference(n).toarray()
    return A, L, rng.standard_normal(m)


@pytest.fixture
def dense_30x20():
    A, L, b = random_pair(30, 20, 30)
    M = L.T @ L
    return A, L, M, b


@pytest.fixture
def exact():
    return InnerSolveConfig(method="direct")


def ops(A, M):
    return LinearOperator.from_matrix(A), LinearOperator.from_matrix(M)
