"""Checks for the vector primitives and the linear-operator wrapper"""
import sys

import numpy as np
import pytest

from minimax.errors import DimensionError, ParameterError
from minimax.linalg import (LinearOperator, SparseRow, as_dense, axpy, dot, norm, sparse_dot,
                            spectral_norm)


def test_dot_and_norm():
    assert dot([], []) == 0.0
    assert dot([1.0, 2.0, 3.0], [4.0, 5.0, 6.0]) == 32.0
    assert norm([3.0, 4.0]) == 5.0
    with pytest.raises(DimensionError):
        dot([1.0, 2.0], [1.0])


def test_dot_is_repeatable():
    rng = np.random.default_rng(7)
    a, b = rng.standard_normal(1000), rng.standard_normal(1000)
    assert dot(a, b) == dot(a, b)


def test_axpy_returns_new_array():
    y = np.array([1.0, 1.0])
    out = axpy(2.0, [1.0, -1.0], y)
    assert np.array_equal(out, [3.0, -1.0])
    assert np.array_equal(y, [1.0, 1.0])
    with pytest.raises(DimensionError):
        axpy(1.0, [1.0], y)


def test_as_dense_rejects_bad_input():
    with pytest.raises(DimensionError):
        as_dense([[1.0]])
    with pytest.raises(DimensionError):
        as_dense([1.0, 2.0], dim=3)
    with pytest.raises(ParameterError):
        as_dense([1.0, np.nan])


def test_sparse_row_validation():
    row = SparseRow([0, 3], [1.5, -2.0], dim=5)
    assert np.array_equal(row.to_dense(), [1.5, 0.0, 0.0, -2.0, 0.0])
    assert row == SparseRow(np.array([0, 3]), np.array([1.5, -2.0]), 5)
    assert row != SparseRow([0, 3], [1.5, -2.0], dim=6)
    with pytest.raises(DimensionError):
        SparseRow([3, 1], [1.0, 1.0], dim=5)
    with pytest.raises(DimensionError):
        SparseRow([5], [1.0], dim=5)
    with pytest.raises(DimensionError):
        SparseRow([0, 1], [1.0], dim=5)


def test_sparse_dot_matches_dense():
    row = SparseRow([1, 4], [2.0, 0.5], dim=5)
    w = np.arange(5, dtype=float)
    assert sparse_dot(row, w) == pytest.approx(row.to_dense() @ w)
    assert sparse_dot(SparseRow([], [], dim=5), w) == 0.0
    with pytest.raises(DimensionError):
        sparse_dot(row, np.ones(4))


def test_spectral_norm_of_diagonal():
    matrix = np.diag([2.0, 1.0, 0.5])
    estimate = spectral_norm(lambda x: matrix @ x, lambda y: matrix.T @ y, 3)
    assert estimate >= 2.0
    assert estimate == pytest.approx(2.0, rel=1e-6)


def test_operator_from_matrix():
    rng = np.random.default_rng(3)
    matrix = rng.standard_normal((4, 6))
    op = LinearOperator.from_matrix(matrix)
    assert (op.rows, op.cols) == (4, 6)
    assert op.norm_bound >= np.linalg.norm(matrix, 2) * (1 - 1e-9)
    x, y = rng.standard_normal(6), rng.standard_normal(4)
    assert np.allclose(op.matvec(x), matrix @ x)
    assert np.allclose(op.rmatvec(y), matrix.T @ y)
    with pytest.raises(DimensionError):
        op.matvec(np.ones(4))
    with pytest.raises(DimensionError):
        op.rmatvec(np.ones(6))


def test_identity_operator():
    op = LinearOperator.identity(3)
    x = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(op.matvec(x), x)
    assert op.norm_bound == 1.0
    with pytest.raises(ParameterError):
        LinearOperator.from_callables(2, 2, np.array, np.array, norm_bound=-1.0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
