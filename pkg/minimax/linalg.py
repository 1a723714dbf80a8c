"""
Vector primitives and the linear-operator abstraction used for the coupling matrix K.

Dense vectors are plain float64 numpy arrays. Reductions accumulate in ascending
index order (a running cumulative sum) so that repeated calls on the same inputs
give bit-identical results.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.sparse.linalg import aslinearoperator

from minimax.errors import DimensionError, ParameterError

POWER_ITERATION_TOL = 1e-8
POWER_ITERATION_MAX_STEPS = 10_000


def as_dense(x, dim: Optional[int] = None, name: str = "vector") -> np.ndarray:
    """Convert to a finite 1-D float64 array, optionally checking its length"""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} has non-finite entries")
    return arr


def _check_same_dim(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


def dot(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_dim(a, b)
    if a.size == 0:
        return 0.0
    return float(np.cumsum(a * b)[-1])


def norm(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(dot(x, x)))


def axpy(alpha: float, x, y) -> np.ndarray:
    """Return y + alpha * x as a new array"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_same_dim(x, y)
    return y + alpha * x


@dataclass(frozen=True, eq=False)
class SparseRow:
    """One data sample stored by its non-zero coordinates (0-based indices)"""
    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if self.dim < 1:
            raise DimensionError("sparse row dimension must be positive")
        if indices.shape != values.shape or indices.ndim != 1:
            raise DimensionError("indices and values must be 1-D arrays of equal length")
        if indices.size:
            if indices[0] < 0 or indices[-1] >= self.dim:
                raise DimensionError(f"index out of range for dimension {self.dim}")
            if np.any(np.diff(indices) <= 0):
                raise DimensionError("indices must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ParameterError("sparse row has non-finite values")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "values", values)

    def __eq__(self, other):
        if not isinstance(other, SparseRow):
            return NotImplemented
        return (self.dim == other.dim
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


def sparse_dot(r: SparseRow, w) -> float:
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (r.dim,):
        raise DimensionError(f"dimension mismatch: row has {r.dim}, vector has {w.shape[0]}")
    if r.indices.size == 0:
        return 0.0
    return float(np.cumsum(r.values * w[r.indices])[-1])


def spectral_norm(matvec: Callable, rmatvec: Callable, cols: int,
                  tol: float = POWER_ITERATION_TOL, seed: int = 0) -> float:
    """Largest singular value by power iteration on K^T K"""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(cols)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(POWER_ITERATION_MAX_STEPS):
        y = rmatvec(matvec(x))
        y_norm = np.linalg.norm(y)
        if y_norm == 0.0:
            return 0.0
        x = y / y_norm
        new_estimate = np.sqrt(y_norm)
        if abs(new_estimate - estimate) <= tol * max(new_estimate, 1.0):
            estimate = new_estimate
            break
        estimate = new_estimate
    # power iteration approaches from below
    return float(estimate * (1.0 + tol))


@dataclass(frozen=True)
class LinearOperator:
    """
    Matrix-free K of shape (rows, cols): apply maps R^cols to R^rows.

    In the nonconvex-linear setting K couples u in R^q to F(w) in R^m, so
    rows = m and cols = q.
    """
    rows: int
    cols: int
    apply: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    apply_transpose: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    norm_bound: float

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DimensionError("operator shape must be positive")
        if not (self.norm_bound >= 0.0 and np.isfinite(self.norm_bound)):
            raise ParameterError("norm_bound must be finite and non-negative")

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.cols,):
            raise DimensionError(f"operator expects dimension {self.cols}, got {x.shape}")
        return np.asarray(self.apply(x), dtype=np.float64)

    def rmatvec(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.rows,):
            raise DimensionError(f"adjoint expects dimension {self.rows}, got {y.shape}")
        return np.asarray(self.apply_transpose(y), dtype=np.float64)

    @classmethod
    def from_matrix(cls, matrix) -> "LinearOperator":
        """Wrap an explicit dense or sparse matrix; the norm bound comes from power iteration"""
        op = aslinearoperator(matrix)
        rows, cols = op.shape
        bound = spectral_norm(op.matvec, op.rmatvec, cols)
        return cls(rows=rows, cols=cols,
                   apply=lambda x: np.ravel(op.matvec(x)),
                   apply_transpose=lambda y: np.ravel(op.rmatvec(y)),
                   norm_bound=bound)

    @classmethod
    def identity(cls, dim: int) -> "LinearOperator":
        return cls(rows=dim, cols=dim, apply=np.array, apply_transpose=np.array, norm_bound=1.0)

    @classmethod
    def from_callables(cls, rows: int, cols: int, apply, apply_transpose,
                       norm_bound: float) -> "LinearOperator":
        return cls(rows=rows, cols=cols, apply=apply, apply_transpose=apply_transpose,
                   norm_bound=norm_bound)
