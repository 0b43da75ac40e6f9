"""Compressed sparse row matrices (constant operands only; no gradient flows into them)."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError


class SparseMatrix:
    """CSR matrix with sorted column indices per row and no stored zeros."""

    __slots__ = ("indptr", "indices", "data", "shape", "_transpose", "_cast")

    def __init__(self, indptr, indices, data, shape: tuple[int, int]):
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        data = np.asarray(data, dtype=np.float64)
        rows, cols = int(shape[0]), int(shape[1])
        if indptr.shape != (rows + 1,) or indptr[0] != 0 or indptr[-1] != len(indices):
            raise ShapeError("malformed CSR row offsets")
        if len(indices) != len(data):
            raise ShapeError("CSR indices and values differ in length")
        if len(indices) and (indices.min() < 0 or indices.max() >= cols):
            raise ShapeError("CSR column index out of range")
        for arr in (indptr, indices, data):
            arr.setflags(write=False)
        self.indptr, self.indices, self.data = indptr, indices, data
        self.shape = (rows, cols)
        self._transpose: SparseMatrix | None = None
        self._cast: dict = {}

    @classmethod
    def from_coo(cls, rows, cols, values, shape: tuple[int, int]) -> "SparseMatrix":
        """Build from triplets; duplicates are summed and explicit zeros dropped."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        n_rows, n_cols = shape
        if len(rows):
            if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
                raise ShapeError("triplet index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if len(rows):
            first = np.ones(len(rows), dtype=bool)
            first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(first)
            values = np.add.reduceat(values, starts)
            rows, cols = rows[starts], cols[starts]
        keep = values != 0.0
        rows, cols, values = rows[keep], cols[keep], values[keep]
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
        return cls(indptr, cols, values, shape)

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = np.nonzero(dense)
        return cls.from_coo(rows, cols, dense[rows, cols], dense.shape)

    @property
    def nnz(self) -> int:
        return len(self.data)

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids(), self.indices] = self.data
        return out

    def transpose(self) -> "SparseMatrix":
        if self._transpose is None:
            t = SparseMatrix.from_coo(self.indices, self.row_ids(), self.data, (self.shape[1], self.shape[0]))
            t._transpose = self
            self._transpose = t
        return self._transpose

    @property
    def T(self) -> "SparseMatrix":
        return self.transpose()

    def _values_as(self, dtype) -> np.ndarray:
        dtype = np.dtype(dtype)
        if dtype == self.data.dtype:
            return self.data
        if dtype not in self._cast:
            self._cast[dtype] = self.data.astype(dtype)
        return self._cast[dtype]

    def dot(self, dense: np.ndarray) -> np.ndarray:
        """Sparse x dense product, accumulated row segment by row segment."""
        dense = np.asarray(dense)
        if dense.ndim != 2 or dense.shape[0] != self.shape[1]:
            raise ShapeError(f"cannot multiply sparse {self.shape} by dense {dense.shape}")
        dtype = dense.dtype if dense.dtype.kind == "f" else np.float64
        out = np.zeros((self.shape[0], dense.shape[1]), dtype=dtype)
        if self.nnz == 0 or dense.shape[1] == 0:
            return out
        products = self._values_as(dtype)[:, None] * dense[self.indices]
        counts = np.diff(self.indptr)
        nonempty = counts > 0
        out[nonempty] = np.add.reduceat(products, self.indptr[:-1][nonempty], axis=0)
        return out

    def __repr__(self) -> str:
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"
