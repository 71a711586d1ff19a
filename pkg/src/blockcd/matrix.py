"""Dense and compressed-sparse-column matrix storage with the solver kernels.

Both storage classes expose the same five kernels (full matvec, transpose
matvec, column-restricted matvec, column norms, Frobenius norm) so solver
code never branches on the representation.  Column-major / CSC layout is
deliberate: every solver step works column-wise (gradient entries are column
dot-products, updates are column gathers).

Matrices are immutable after construction and safe to share between
concurrent runs; every kernel returns a freshly allocated array.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Matrix", "DenseMatrix", "SparseMatrixCSC"]


class Matrix:
    """Common kernel interface over dense and CSC storage."""

    rows: int
    cols: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """y = A x."""
        raise NotImplementedError

    def transpose_matvec(self, r: np.ndarray) -> np.ndarray:
        """s = A^T r, entry j the dot of column j with r."""
        raise NotImplementedError

    def restricted_matvec(self, indices: np.ndarray, values: np.ndarray) -> np.ndarray:
        """A eta for the sparse direction carrying `values` on `indices`.

        Touches only the selected columns.
        """
        raise NotImplementedError

    def column_norms(self) -> np.ndarray:
        """Euclidean norm of every column."""
        raise NotImplementedError

    def frobenius_norm(self) -> float:
        raise NotImplementedError

    def gather_columns(self, indices: np.ndarray) -> np.ndarray:
        """Dense m-by-len(indices) copy of the selected columns."""
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        """Dense 2-D view/copy of the matrix (oracle and test use)."""
        raise NotImplementedError

    @property
    def nnz(self) -> int:
        raise NotImplementedError

    def _check_vec(self, v: np.ndarray, length: int, op: str) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != length:
            raise ValueError(
                f"{op}: expected vector of length {length}, got shape {v.shape}"
            )
        return v

    def _check_indices(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("column indices must be one-dimensional")
        if idx.size and (idx.min() < 0 or idx.max() >= self.cols):
            raise ValueError(
                f"column index out of range: valid range is [0, {self.cols})"
            )
        return idx


class DenseMatrix(Matrix):
    """Column-major (Fortran-order) dense matrix of 64-bit floats."""

    def __init__(self, values):
        a = np.array(values, dtype=np.float64, order="F")
        if a.ndim != 2:
            raise ValueError(f"dense matrix needs a 2-D array, got ndim={a.ndim}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"matrix dimensions must be >= 1, got {a.shape}")
        self._a = a
        self._a.flags.writeable = False
        self.rows, self.cols = a.shape

    @property
    def array(self) -> np.ndarray:
        return self._a

    def matvec(self, x):
        x = self._check_vec(x, self.cols, "matvec")
        return self._a @ x

    def transpose_matvec(self, r):
        r = self._check_vec(r, self.rows, "transpose_matvec")
        return self._a.T @ r

    def restricted_matvec(self, indices, values):
        idx = self._check_indices(indices)
        vals = np.asarray(values, dtype=np.float64)
        if vals.shape != idx.shape:
            raise ValueError("indices and direction values must have equal length")
        # accumulating per column beats gathering a submatrix: no m-by-|tau| copy
        y = np.zeros(self.rows)
        a = self._a
        for j, v in zip(idx, vals):
            y += v * a[:, j]
        return y

    def column_norms(self):
        return np.sqrt(np.einsum("ij,ij->j", self._a, self._a))

    def frobenius_norm(self):
        return float(np.linalg.norm(self._a))

    def gather_columns(self, indices):
        idx = self._check_indices(indices)
        return np.array(self._a[:, idx], order="F")

    def to_dense(self):
        return self._a

    @property
    def nnz(self) -> int:
        return self.rows * self.cols


class SparseMatrixCSC(Matrix):
    """Compressed sparse column storage.

    Invariants enforced at construction: non-decreasing `indptr` starting at 0
    and ending at nnz, strictly increasing row indices within each column, no
    explicitly stored zeros.  Use :meth:`from_coo` for unsorted triplet input
    (duplicates are summed; entries that cancel to exact zero are dropped).
    """

    def __init__(self, rows: int, cols: int, indptr, row_indices, values):
        if rows < 1 or cols < 1:
            raise ValueError(f"matrix dimensions must be >= 1, got ({rows}, {cols})")
        indptr = np.asarray(indptr, dtype=np.int64)
        row_indices = np.asarray(row_indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if indptr.shape != (cols + 1,):
            raise ValueError(f"indptr must have length cols+1={cols + 1}")
        if indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise ValueError("indptr must be non-decreasing and start at 0")
        if indptr[-1] != len(values) or len(row_indices) != len(values):
            raise ValueError("indptr[-1] must equal the number of stored entries")
        if values.size and (row_indices.min() < 0 or row_indices.max() >= rows):
            raise ValueError(f"row index out of range: valid range is [0, {rows})")
        if np.any(values == 0.0):
            raise ValueError("explicit zero values are not allowed in CSC storage")

        self.rows = int(rows)
        self.cols = int(cols)
        self.indptr = indptr
        self.row_indices = row_indices
        self.values = values
        # column id of each stored entry, precomputed for the bincount kernels
        self._entry_col = np.repeat(np.arange(cols, dtype=np.int64), np.diff(indptr))

        if values.size:
            same_col = self._entry_col[1:] == self._entry_col[:-1]
            if np.any(np.diff(row_indices)[same_col] <= 0):
                raise ValueError("row indices must be strictly increasing per column")
        for arr in (self.indptr, self.row_indices, self.values, self._entry_col):
            arr.flags.writeable = False

    @classmethod
    def from_coo(cls, rows: int, cols: int, row_idx, col_idx, values) -> "SparseMatrixCSC":
        """Build from triplets, summing duplicates and dropping exact zeros."""
        ri = np.asarray(row_idx, dtype=np.int64)
        ci = np.asarray(col_idx, dtype=np.int64)
        v = np.asarray(values, dtype=np.float64)
        if not (ri.shape == ci.shape == v.shape):
            raise ValueError("row, column and value arrays must have equal length")
        if ri.size:
            if ri.min() < 0 or ri.max() >= rows:
                raise ValueError(f"row index out of range: valid range is [0, {rows})")
            if ci.min() < 0 or ci.max() >= cols:
                raise ValueError(f"column index out of range: valid range is [0, {cols})")
        key = ci * np.int64(rows) + ri
        order = np.argsort(key, kind="stable")
        key, v = key[order], v[order]
        uniq, start = np.unique(key, return_index=True)
        summed = np.add.reduceat(v, start) if v.size else v
        keep = summed != 0.0
        uniq, summed = uniq[keep], summed[keep]
        ci, ri = uniq // rows, uniq % rows
        indptr = np.zeros(cols + 1, dtype=np.int64)
        np.cumsum(np.bincount(ci, minlength=cols), out=indptr[1:])
        return cls(rows, cols, indptr, ri, summed)

    @classmethod
    def from_dense(cls, array) -> "SparseMatrixCSC":
        a = np.asarray(array, dtype=np.float64)
        ri, ci = np.nonzero(a)
        # nonzero() walks rows first; from_coo resorts into column order
        return cls.from_coo(a.shape[0], a.shape[1], ri, ci, a[ri, ci])

    def matvec(self, x):
        x = self._check_vec(x, self.cols, "matvec")
        w = self.values * x[self._entry_col]
        return np.bincount(self.row_indices, weights=w, minlength=self.rows)

    def transpose_matvec(self, r):
        r = self._check_vec(r, self.rows, "transpose_matvec")
        w = self.values * r[self.row_indices]
        return np.bincount(self._entry_col, weights=w, minlength=self.cols)

    def restricted_matvec(self, indices, values):
        idx = self._check_indices(indices)
        vals = np.asarray(values, dtype=np.float64)
        if vals.shape != idx.shape:
            raise ValueError("indices and direction values must have equal length")
        y = np.zeros(self.rows)
        # row indices are unique within a column, so fancy += is collision-free
        for j, v in zip(idx, vals):
            lo, hi = self.indptr[j], self.indptr[j + 1]
            y[self.row_indices[lo:hi]] += v * self.values[lo:hi]
        return y

    def column_norms(self):
        sq = np.bincount(self._entry_col, weights=self.values**2, minlength=self.cols)
        return np.sqrt(sq)

    def frobenius_norm(self):
        return float(np.linalg.norm(self.values))

    def gather_columns(self, indices):
        idx = self._check_indices(indices)
        out = np.zeros((self.rows, len(idx)), order="F")
        for p, j in enumerate(idx):
            lo, hi = self.indptr[j], self.indptr[j + 1]
            out[self.row_indices[lo:hi], p] = self.values[lo:hi]
        return out

    def to_dense(self):
        out = np.zeros((self.rows, self.cols), order="F")
        out[self.row_indices, self._entry_col] = self.values
        return out

    @property
    def entry_columns(self) -> np.ndarray:
        """Column id of each stored entry, aligned with `values`."""
        return self._entry_col

    @property
    def nnz(self) -> int:
        return len(self.values)
