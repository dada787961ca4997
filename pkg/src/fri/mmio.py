"""Matrix Market coordinate-format IO.

Hand-rolled rather than delegated so that parse errors carry line numbers.
Supports real/integer/complex fields, general or symmetric storage.
"""

from __future__ import annotations

import numpy as np

from .linop import ExplicitMatrix
from .sparse import SparseVector, from_arrays

__all__ = [
    "MatrixMarketError",
    "load_matrix_market",
    "load_vector_market",
    "save_matrix_market",
    "save_vector_market",
]


class MatrixMarketError(ValueError):
    pass


_FIELDS = ("real", "integer", "complex")
_SYMMETRIES = ("general", "symmetric")


def _parse_header(line: str, path: str) -> tuple[str, str]:
    tokens = line.strip().split()
    if len(tokens) != 5 or tokens[0] != "%%MatrixMarket":
        raise MatrixMarketError(f"{path}: line 1: malformed MatrixMarket header")
    _, obj, fmt, field, sym = (t.lower() for t in tokens)
    if obj != "matrix" or fmt != "coordinate":
        raise MatrixMarketError(
            f"{path}: line 1: only 'matrix coordinate' files are supported"
        )
    if field not in _FIELDS:
        raise MatrixMarketError(f"{path}: line 1: unsupported field {field!r}")
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"{path}: line 1: unsupported symmetry {sym!r}")
    return field, sym


def _read_coordinate(path: str) -> tuple[int, int, np.ndarray, np.ndarray, np.ndarray]:
    with open(path, "r") as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixMarketError(f"{path}: line 1: empty file")
    field, sym = _parse_header(lines[0], path)

    ln = 1
    size_line = None
    while ln < len(lines):
        stripped = lines[ln].strip()
        ln += 1
        if stripped and not stripped.startswith("%"):
            size_line = stripped
            break
    if size_line is None:
        raise MatrixMarketError(f"{path}: line {ln}: missing size line")
    parts = size_line.split()
    if len(parts) != 3:
        raise MatrixMarketError(f"{path}: line {ln}: size line needs 'rows cols nnz'")
    try:
        nrows, ncols, nnz = (int(p) for p in parts)
    except ValueError:
        raise MatrixMarketError(f"{path}: line {ln}: non-integer size entry") from None

    want = 3 if field in ("real", "integer") else 4
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.complex128)
    k = 0
    for offset in range(ln, len(lines)):
        stripped = lines[offset].strip()
        if not stripped or stripped.startswith("%"):
            continue
        tokens = stripped.split()
        if len(tokens) != want:
            raise MatrixMarketError(
                f"{path}: line {offset + 1}: expected {want} tokens, got {len(tokens)}"
            )
        if k >= nnz:
            raise MatrixMarketError(
                f"{path}: line {offset + 1}: more entries than the declared {nnz}"
            )
        try:
            i = int(tokens[0])
            j = int(tokens[1])
            if field == "complex":
                value = complex(float(tokens[2]), float(tokens[3]))
            else:
                value = complex(float(tokens[2]))
        except ValueError:
            raise MatrixMarketError(
                f"{path}: line {offset + 1}: malformed entry {stripped!r}"
            ) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(
                f"{path}: line {offset + 1}: index ({i}, {j}) outside {nrows}x{ncols}"
            )
        rows[k] = i - 1
        cols[k] = j - 1
        vals[k] = value
        k += 1
    if k != nnz:
        raise MatrixMarketError(
            f"{path}: line {len(lines)}: declared {nnz} entries, found {k}"
        )

    if sym == "symmetric":
        off = rows != cols
        mirrored_rows = np.concatenate([rows, cols[off]])
        mirrored_cols = np.concatenate([cols, rows[off]])
        vals = np.concatenate([vals, vals[off]])
        rows, cols = mirrored_rows, mirrored_cols
    return nrows, ncols, rows, cols, vals


def load_matrix_market(path: str) -> ExplicitMatrix:
    """Load a square matrix; symmetric entries expanded, duplicates summed."""
    nrows, ncols, rows, cols, vals = _read_coordinate(path)
    if nrows != ncols:
        raise MatrixMarketError(f"{path}: matrix is {nrows}x{ncols}, square required")
    return ExplicitMatrix.from_triplets(nrows, rows, cols, vals)


def load_vector_market(path: str) -> SparseVector:
    """Load an n-by-1 (or 1-by-n) coordinate file as a sparse vector."""
    nrows, ncols, rows, cols, vals = _read_coordinate(path)
    if ncols == 1:
        return from_arrays(rows.astype(np.uint64), vals)
    if nrows == 1:
        return from_arrays(cols.astype(np.uint64), vals)
    raise MatrixMarketError(f"{path}: vector file must be n x 1, got {nrows}x{ncols}")


def _format_value(v: complex, field: str) -> str:
    if field == "complex":
        return f"{float(v.real)!r} {float(v.imag)!r}"
    return f"{float(v.real)!r}"


def save_matrix_market(path: str, matrix: ExplicitMatrix) -> None:
    triplets = list(matrix.iter_triplets())
    field = "complex" if any(v.imag != 0 for _, _, v in triplets) else "real"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate {field} general\n")
        fh.write(f"{matrix.dim} {matrix.dim} {len(triplets)}\n")
        for i, j, v in triplets:
            fh.write(f"{i + 1} {j + 1} {_format_value(v, field)}\n")


def save_vector_market(path: str, v: SparseVector, dim: int | None = None) -> None:
    n = int(dim) if dim is not None else (int(v.indices[-1]) + 1 if v.nnz else 0)
    field = "complex" if np.any(v.values.imag != 0) else "real"
    with open(path, "w") as fh:
        fh.write(f"%%MatrixMarket matrix coordinate {field} general\n")
        fh.write(f"{n} 1 {v.nnz}\n")
        for i, val in zip(v.indices, v.values):
            fh.write(f"{int(i) + 1} 1 {_format_value(complex(val), field)}\n")
