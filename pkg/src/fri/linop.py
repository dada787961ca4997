"""Column-access linear operators and the sparse application kernel.

Operators expose per-column nonzero enumeration only, so a matrix never has
to be formed; applying one to a sparse vector lists the (row, K_ij * v_j)
products, sorts them by row, and combines duplicates.
"""

from __future__ import annotations

import numpy as np

from .compress import CompressionError, CompressionRule, RngStream, compress, _counts_systematic
from .sparse import SparseVector, empty, from_arrays

__all__ = [
    "ColumnOracle",
    "ExplicitMatrix",
    "apply_sparse",
    "apply_column_compressed",
]

_U64 = np.uint64
_C128 = np.complex128


class ColumnOracle:
    """Base class for column-access operators.

    Subclasses must provide ``dim`` and ``column(j)``; ``column(j)`` yields the
    nonzero (row index, value) pairs of column j, each row at most once.
    ``gather_products`` may be overridden with a vectorized implementation;
    ``column_l1(j)`` may return None when column norms are not available.
    """

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def column_l1(self, j: int) -> float | None:
        rows, vals = self.column(j)
        return float(np.abs(vals).sum())

    @property
    def has_column_l1(self) -> bool:
        return True

    def gather_products(self, indices: np.ndarray, values: np.ndarray
                        ) -> tuple[np.ndarray, np.ndarray]:
        """All (row, K_ij * v_j) products over the stored support, unsorted."""
        row_parts = []
        prod_parts = []
        for j, vj in zip(indices, values):
            rows, vals = self.column(int(j))
            if rows.size:
                row_parts.append(rows)
                prod_parts.append(vals * vj)
        if not row_parts:
            e = empty()
            return e.indices, e.values
        return np.concatenate(row_parts), np.concatenate(prod_parts)


class ExplicitMatrix(ColumnOracle):
    """Compressed column-major storage of an n-by-n complex matrix."""

    def __init__(self, n: int, indptr: np.ndarray, rowidx: np.ndarray,
                 values: np.ndarray):
        self._n = int(n)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.rowidx = np.ascontiguousarray(rowidx, dtype=_U64)
        self.values = np.ascontiguousarray(values, dtype=_C128)
        if self.indptr.size != self._n + 1 or self.indptr[0] != 0:
            raise ValueError("malformed column pointers")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("column pointers must be monotone")
        self._col_l1 = None

    @classmethod
    def from_triplets(cls, n: int, rows, cols, vals) -> "ExplicitMatrix":
        rows = np.asarray(rows, dtype=_U64)
        cols = np.asarray(cols, dtype=_U64)
        vals = np.asarray(vals, dtype=_C128)
        if np.any(rows >= n) or np.any(cols >= n):
            raise ValueError("entry index out of range")
        # sort by (col, row), then sum duplicates
        order = np.lexsort((rows, cols))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size > 1:
            newgrp = np.empty(rows.size, dtype=bool)
            newgrp[0] = True
            newgrp[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(newgrp)
            rows, cols = rows[starts], cols[starts]
            vals = np.add.reduceat(vals, starts)
        keep = vals != 0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        counts = np.bincount(cols.astype(np.int64), minlength=n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return cls(n, indptr, rows, vals)

    @classmethod
    def from_dense(cls, array) -> "ExplicitMatrix":
        array = np.asarray(array, dtype=_C128)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise ValueError("square matrix required")
        rows, cols = np.nonzero(array)
        return cls.from_triplets(array.shape[0], rows, cols, array[rows, cols])

    @property
    def dim(self) -> int:
        return self._n

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        if not 0 <= j < self._n:
            raise IndexError(f"column {j} out of range for dim {self._n}")
        lo, hi = self.indptr[j], self.indptr[j + 1]
        return self.rowidx[lo:hi], self.values[lo:hi]

    def column_l1(self, j: int) -> float:
        return float(self._column_l1_all()[j])

    def _column_l1_all(self) -> np.ndarray:
        if self._col_l1 is None:
            mags = np.abs(self.values)
            self._col_l1 = np.add.reduceat(
                np.concatenate([mags, [0.0]]), self.indptr[:-1]
            ) * (np.diff(self.indptr) > 0)
        return self._col_l1

    def gather_products(self, indices: np.ndarray, values: np.ndarray
                        ) -> tuple[np.ndarray, np.ndarray]:
        cols = indices.astype(np.int64)
        lo = self.indptr[cols]
        counts = self.indptr[cols + 1] - lo
        total = int(counts.sum())
        if total == 0:
            e = empty()
            return e.indices, e.values
        # positions of every stored entry of the selected columns
        out_starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        offsets = (
            np.arange(total, dtype=np.int64)
            - np.repeat(out_starts, counts)
            + np.repeat(lo, counts)
        )
        rows = self.rowidx[offsets]
        prods = self.values[offsets] * np.repeat(values, counts)
        return rows, prods

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self._n, self._n), dtype=_C128)
        for j in range(self._n):
            rows, vals = self.column(j)
            out[rows.astype(np.int64), j] = vals
        return out

    def iter_triplets(self):
        for j in range(self._n):
            rows, vals = self.column(j)
            for i, v in zip(rows, vals):
                yield int(i), j, complex(v)

    @property
    def nnz(self) -> int:
        return self.values.size


def apply_sparse(K: ColumnOracle, v: SparseVector) -> SparseVector:
    """K @ v over v's stored support, by sort-and-combine."""
    if v.nnz == 0:
        return v
    if int(v.indices[-1]) >= K.dim:
        raise IndexError(
            f"index {int(v.indices[-1])} out of range for operator dim {K.dim}"
        )
    rows, prods = K.gather_products(v.indices, v.values)
    return from_arrays(rows, prods)


def apply_column_compressed(K: ColumnOracle, v: SparseVector, m_total: int,
                            rng: RngStream) -> SparseVector:
    """Apply K with per-column compression under a total entry budget.

    Column budgets come from one systematic resampling pass over the weights
    column_l1(j) * |v_j|; a column drawn N_j times is compressed to N_j entries
    by the systematic rule and contributes with mass N_j * Omega / m_total
    (Omega = total weight), which makes every fixed functional projection an
    unbiased estimate of apply_sparse(K, v).  When no column norms are
    available every stored-support column instead keeps a single entry.
    """
    if m_total < 1:
        raise CompressionError("total budget must be >= 1")
    if v.nnz == 0:
        return v
    if int(v.indices[-1]) >= K.dim:
        raise IndexError(
            f"index {int(v.indices[-1])} out of range for operator dim {K.dim}"
        )

    if not K.has_column_l1:
        budgets = np.ones(v.nnz, dtype=np.int64)
        scales = np.asarray(v.values)
    else:
        weights = np.array(
            [K.column_l1(int(j)) for j in v.indices], dtype=np.float64
        ) * np.abs(v.values)
        omega = float(weights.sum())
        if omega == 0:
            return empty()
        budgets = _counts_systematic(weights, m_total, rng)
        # realized column mass is N_j * Omega / m_total, the resampling
        # convention that keeps the expectation exact for any weights
        with np.errstate(divide="ignore", invalid="ignore"):
            factors = np.where(
                budgets > 0, budgets * (omega / m_total) / weights, 0.0
            )
        scales = np.asarray(v.values) * factors

    row_parts = []
    val_parts = []
    for j, mj, sj in zip(v.indices, budgets, scales):
        if mj <= 0:
            continue
        rows, vals = K.column(int(j))
        if rows.size == 0:
            continue
        col = from_arrays(rows, vals)
        rule = CompressionRule("systematic", int(mj))
        compressed = compress(rule, col, rng)
        row_parts.append(compressed.indices)
        val_parts.append(compressed.values * sj)
    if not row_parts:
        return empty()
    return from_arrays(np.concatenate(row_parts), np.concatenate(val_parts))
