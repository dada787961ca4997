"""Sorted sparse complex vectors keyed by 64-bit indices.

A :class:`SparseVector` stores the nonzero entries of a vector whose index
space may be as large as 2**64.  Entries are kept as two flat arrays (strictly
increasing ``uint64`` indices, ``complex128`` values) so that all arithmetic
reduces to merges and scans.  Values are immutable after construction; every
operation returns a new vector.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

__all__ = [
    "SparseVector",
    "DenseFunctional",
    "from_pairs",
    "from_arrays",
    "empty",
    "l1_norm",
    "dot",
    "scale",
    "axpy",
    "normalize_l1",
    "project_zero",
    "all_ones",
    "indicator",
    "basis_functional",
    "functional_from_sparse",
    "dump_lines",
]

_U64 = np.uint64
_C128 = np.complex128


class SparseVector:
    """Sparse vector with strictly increasing indices and no stored zeros.

    Use :func:`from_pairs` or :func:`from_arrays` to build one from raw data;
    the constructor expects already-canonical arrays.
    """

    __slots__ = ("indices", "values")

    def __init__(self, indices: np.ndarray, values: np.ndarray):
        indices = np.ascontiguousarray(indices, dtype=_U64)
        values = np.ascontiguousarray(values, dtype=_C128)
        if indices.ndim != 1 or values.ndim != 1 or indices.size != values.size:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if indices.size > 1 and not np.all(indices[1:] > indices[:-1]):
            raise ValueError("indices must be strictly increasing")
        if values.size and np.any(values == 0):
            raise ValueError("stored values must be nonzero")
        indices.setflags(write=False)
        values.setflags(write=False)
        self.indices = indices
        self.values = values

    @property
    def nnz(self) -> int:
        return self.indices.size

    def to_pairs(self) -> list[tuple[int, complex]]:
        return [(int(i), complex(v)) for i, v in zip(self.indices, self.values)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.nnz == other.nnz
            and bool(np.array_equal(self.indices, other.indices))
            and bool(np.array_equal(self.values, other.values))
        )

    __hash__ = None  # unhashable; __eq__ is value-based

    def __repr__(self) -> str:
        if self.nnz <= 6:
            return f"SparseVector({self.to_pairs()})"
        return f"SparseVector(nnz={self.nnz}, l1={l1_norm(self):.6g})"


def empty() -> SparseVector:
    return SparseVector(np.empty(0, dtype=_U64), np.empty(0, dtype=_C128))


def from_arrays(indices: np.ndarray, values: np.ndarray) -> SparseVector:
    """Canonicalize raw (index, value) arrays into a SparseVector.

    Duplicate indices are summed, exact-zero results dropped, output sorted.
    This is also the sort-and-combine kernel used to assemble matrix-vector
    products.
    """
    indices = np.asarray(indices, dtype=_U64)
    values = np.asarray(values).astype(_C128, copy=True)
    if indices.size == 0:
        return empty()
    order = np.argsort(indices, kind="stable")
    indices = indices[order]
    values = values[order]
    if indices.size > 1:
        newgrp = np.empty(indices.size, dtype=bool)
        newgrp[0] = True
        np.not_equal(indices[1:], indices[:-1], out=newgrp[1:])
        if not newgrp.all():
            starts = np.flatnonzero(newgrp)
            indices = indices[starts]
            values = np.add.reduceat(values, starts)
    keep = values != 0
    if not keep.all():
        indices = indices[keep]
        values = values[keep]
    return SparseVector(indices, values)


def from_pairs(pairs: Iterable[tuple[int, complex]]) -> SparseVector:
    pairs = list(pairs)
    if not pairs:
        return empty()
    indices = np.array([p[0] for p in pairs], dtype=_U64)
    values = np.array([p[1] for p in pairs], dtype=_C128)
    return from_arrays(indices, values)


def l1_norm(v: SparseVector) -> float:
    return float(np.abs(v.values).sum()) if v.nnz else 0.0


def scale(v: SparseVector, c: complex) -> SparseVector:
    if v.nnz == 0 or c == 0:
        return empty()
    values = v.values * c
    keep = values != 0  # scaling can underflow to exact zero
    if keep.all():
        return SparseVector(v.indices, values)
    return SparseVector(v.indices[keep], values[keep])


def axpy(a: complex, x: SparseVector, y: SparseVector) -> SparseVector:
    """a*x + y."""
    if a == 0 or x.nnz == 0:
        return y
    if y.nnz == 0:
        return scale(x, a)
    return from_arrays(
        np.concatenate([x.indices, y.indices]),
        np.concatenate([x.values * a, y.values]),
    )


def normalize_l1(v: SparseVector) -> SparseVector:
    nrm = l1_norm(v)
    if nrm == 0:
        raise ValueError("zero vector")
    return scale(v, 1.0 / nrm)


def project_zero(v: SparseVector, forbidden: Callable[[np.ndarray], np.ndarray] | None) -> SparseVector:
    """Remove entries whose index the predicate marks as forbidden."""
    if forbidden is None or v.nnz == 0:
        return v
    mask = np.asarray(forbidden(v.indices), dtype=bool)
    if not mask.any():
        return v
    keep = ~mask
    return SparseVector(v.indices[keep], v.values[keep])


class DenseFunctional:
    """A functional f evaluable at arbitrary indices without O(n) storage.

    ``at(indices)`` returns the entries f_i for a batch of uint64 indices;
    ``dot(f, v)`` then computes sum(conj(f_i) * v_i) over the stored support
    of v.
    """

    __slots__ = ("_fn", "name")

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "f"):
        self._fn = fn
        self.name = name

    def at(self, indices: np.ndarray) -> np.ndarray:
        return np.asarray(self._fn(indices), dtype=_C128)


def all_ones(name: str = "ones") -> DenseFunctional:
    return DenseFunctional(lambda idx: np.ones(idx.size, dtype=_C128), name)


def indicator(pred: Callable[[np.ndarray], np.ndarray], name: str = "indicator") -> DenseFunctional:
    return DenseFunctional(
        lambda idx: np.asarray(pred(idx), dtype=bool).astype(_C128), name
    )


def basis_functional(i: int, name: str | None = None) -> DenseFunctional:
    iv = _U64(i)
    return DenseFunctional(
        lambda idx: (idx == iv).astype(_C128), name or f"e{i}"
    )


def functional_from_sparse(f: SparseVector, name: str = "f") -> DenseFunctional:
    def lookup(idx: np.ndarray) -> np.ndarray:
        out = np.zeros(idx.size, dtype=_C128)
        pos = np.searchsorted(f.indices, idx)
        pos = np.minimum(pos, max(f.nnz - 1, 0))
        if f.nnz:
            hit = f.indices[pos] == idx
            out[hit] = f.values[pos[hit]]
        return out

    return DenseFunctional(lookup, name)


def dot(f: DenseFunctional | SparseVector, v: SparseVector) -> complex:
    """sum over v's support of conj(f_j) * v_j."""
    if v.nnz == 0:
        return 0j
    if isinstance(f, SparseVector):
        f = functional_from_sparse(f)
    fv = f.at(v.indices)
    return complex(np.vdot(fv, v.values))


def dump_lines(v: SparseVector) -> list[str]:
    """Textual debug dump: one ``index,re,im`` line per entry, sorted."""
    return [
        f"{int(i)},{float(val.real)!r},{float(val.imag)!r}"
        for i, val in zip(v.indices, v.values)
    ]
