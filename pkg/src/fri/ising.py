"""Matrix-free 2D Ising transfer operator and its exact small-system oracle.

States are spin windows encoded as integers: bit k of the 64-bit index is the
spin added k steps ago (bit 1 = spin +1, bit 0 = spin -1).  Appending a spin
is the shift-register move sigma' = (2*sigma + bit) mod 2**ell, and the
transition weight charges the outgoing spin s_out with its two couplings and
its field term:

    exp[(s_out*s_new + s_out*s_prev + B*s_out) / T]

where s_prev is the second-oldest spin of the window.  Only the two leading
bits of the state enter the weight, so per-transition weights reduce to a
four-entry table.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linop import ColumnOracle
from .sparse import DenseFunctional

with warnings.catch_warnings():
    # the TBB probe warns on some hosts; the workqueue layer is always present
    warnings.simplefilter("ignore")
    import numba

numba.config.THREADING_LAYER = "workqueue"

__all__ = [
    "IsingParams",
    "IsingOperator",
    "ising_operator",
    "ising_exact",
    "tail_weight_functional",
]

_U64 = np.uint64
MAX_EXACT_ELL = 26


@dataclass(frozen=True)
class IsingParams:
    """Spin count, temperature and field of the transfer operator."""

    ell: int
    T: float
    B: float

    def __post_init__(self):
        if not 3 <= self.ell <= 63:
            raise ValueError("ell must be in [3, 63]")
        if not self.T > 0:
            raise ValueError("temperature must be positive")
        for w in self.weights():
            if not np.isfinite(w) or w <= 0:
                raise ValueError("parameters give non-finite transition weights")

    def weights(self) -> tuple[float, float, float]:
        """(a, b, c) = exp((2-B)/T), exp(-B/T), exp(-(2+B)/T)."""
        a = float(np.exp((2.0 - self.B) / self.T))
        b = float(np.exp(-self.B / self.T))
        c = float(np.exp(-(2.0 + self.B) / self.T))
        return a, b, c


def _weight_tables(p: IsingParams) -> tuple[np.ndarray, np.ndarray]:
    """Transition weights indexed by (bit ell-1 << 1) | bit ell-2.

    Entry order: (s_out, s_prev) = (-,-), (-,+), (+,-), (+,+); the first table
    is for appending spin -1, the second for spin +1.
    """
    a, b, c = p.weights()
    w_minus = np.array([a, b, 1.0 / a, 1.0 / b])
    w_plus = np.array([b, c, 1.0 / b, 1.0 / c])
    return w_minus, w_plus


class IsingOperator(ColumnOracle):
    """Column oracle for the 2**ell-dimensional transfer matrix."""

    def __init__(self, params: IsingParams):
        self.params = params
        self._w_minus, self._w_plus = _weight_tables(params)
        self._col_l1 = self._w_minus + self._w_plus
        self._mask = _U64((1 << params.ell) - 1)
        self._sh_out = _U64(params.ell - 1)
        self._sh_prev = _U64(params.ell - 2)

    @property
    def dim(self) -> int:
        return 1 << self.params.ell

    def _codes(self, indices: np.ndarray) -> np.ndarray:
        one = _U64(1)
        return (
            (((indices >> self._sh_out) & one) << one)
            | ((indices >> self._sh_prev) & one)
        ).astype(np.intp)

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        if not 0 <= j < self.dim:
            raise IndexError(f"column {j} out of range for dim {self.dim}")
        jj = np.array([j], dtype=_U64)
        code = self._codes(jj)[0]
        low = (jj[0] << _U64(1)) & self._mask
        rows = np.array([low, low | _U64(1)], dtype=_U64)
        vals = np.array([self._w_minus[code], self._w_plus[code]])
        return rows, vals

    def column_l1(self, j: int) -> float:
        jj = np.array([j], dtype=_U64)
        return float(self._col_l1[self._codes(jj)[0]])

    def gather_products(self, indices: np.ndarray, values: np.ndarray
                        ) -> tuple[np.ndarray, np.ndarray]:
        codes = self._codes(indices)
        low = (indices << _U64(1)) & self._mask
        n2 = indices.size * 2
        rows = np.empty(n2, dtype=_U64)
        prods = np.empty(n2, dtype=np.complex128)
        rows[0::2] = low
        rows[1::2] = low | _U64(1)
        prods[0::2] = self._w_minus[codes] * values
        prods[1::2] = self._w_plus[codes] * values
        return rows, prods


def ising_operator(p: IsingParams) -> IsingOperator:
    return IsingOperator(p)


def tail_weight_functional(ell: int) -> DenseFunctional:
    """Indicator of the upper half of the state space (leading spin +1)."""
    threshold = _U64(1 << (ell - 1))
    return DenseFunctional(
        lambda idx: (idx >= threshold).astype(np.complex128), name="tail_weight"
    )


@numba.njit(parallel=True, cache=True)
def _dense_apply(v, out, a, b, c, quarter, half):
    ia = 1.0 / a
    ib = 1.0 / b
    ic = 1.0 / c
    for k in numba.prange(half):
        x0 = v[k]
        x1 = v[k + half]
        if k < quarter:
            out[2 * k] = a * x0 + ia * x1
            out[2 * k + 1] = b * x0 + ib * x1
        else:
            out[2 * k] = b * x0 + ib * x1
            out[2 * k + 1] = c * x0 + ic * x1


def ising_exact(p: IsingParams, tol: float = 1e-11, max_iters: int = 50000,
                seed: int = 170) -> tuple[float, float, np.ndarray]:
    """Dominant eigenvalue, tail weight and eigenvector by dense power iteration.

    Iterates with l1 normalization until |lambda_{t+1} - lambda_t| < tol.  The
    start vector is seeded random positive: a start that depends on only a few
    leading bits sits in an exactly invariant subspace of the shift-register
    dynamics for ~ell iterations and stalls the eigenvalue on false plateaus.
    """
    if p.ell > MAX_EXACT_ELL:
        raise ValueError(f"exact oracle requires ell <= {MAX_EXACT_ELL}")
    n = 1 << p.ell
    half = n >> 1
    quarter = n >> 2
    a, b, c = p.weights()
    gen = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=_U64)))
    v = 1.0 + gen.random(n)
    v /= v.sum()
    out = np.empty(n)
    lam_prev = np.inf
    lam = np.inf
    converged = False
    for _ in range(max_iters):
        _dense_apply(v, out, a, b, c, quarter, half)
        lam = float(out.sum())
        out /= lam
        v, out = out, v
        if abs(lam - lam_prev) < tol:
            converged = True
            break
        lam_prev = lam
    if not converged:
        raise RuntimeError(f"power iteration did not converge in {max_iters} iterations")
    f_tail = float(v[half:].sum())
    return lam, f_tail, v
