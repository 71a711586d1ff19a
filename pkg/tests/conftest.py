import numpy as np
import pytest

from blockcd import DenseMatrix, SparseMatrixCSC


def random_sparse(m, n, density, seed):
    """Dense array + its two Matrix encodings, no zero columns."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, n))
    a[rng.random((m, n)) >= density] = 0.0
    for j in range(n):
        if not a[:, j].any():
            a[rng.integers(m), j] = rng.standard_normal()
    return a, DenseMatrix(a), SparseMatrixCSC.from_dense(a)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
