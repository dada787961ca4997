"""Randomized sparsifying compression of vectors.

A compression maps a sparse vector to a random vector with at most ``m``
nonzero entries whose conditional expectation equals the input.  All stochastic
variants share the same deterministic first stage: the largest-magnitude
entries are preserved exactly while doing so strictly lowers the mass left to
the stochastic stage (see :func:`exact_preservation_split`).  The remaining
entries are then rounded by one of four unbiased rules, or simply truncated by
the deterministic truncation-by-size baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse import SparseVector, l1_norm

__all__ = [
    "CompressionError",
    "RngStream",
    "CompressionRule",
    "SplitResult",
    "RULE_KINDS",
    "exact_preservation_split",
    "compress",
    "stochastic_round_floor_ceil",
    "stochastic_round_independent_uniform",
    "stochastic_round_systematic",
    "stochastic_round_stratified",
    "tbs_truncate",
]

RULE_KINDS = ("floorceil", "indep", "systematic", "stratified", "tbs")
STOCHASTIC_ORDERS = ("input", "magdesc")

_MASK64 = (1 << 64) - 1
_MAX_ZERO_REDRAWS = 1000


class CompressionError(ValueError):
    pass


def _mix64(x: int) -> int:
    """SplitMix64 finalizer; bijective on 64-bit ints."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class RngStream:
    """Counter-based random stream keyed by (seed, stream id).

    Identical (seed, stream, call sequence) reproduces identical uniforms
    bit for bit; distinct stream ids give statistically independent sequences
    (Philox counter-mode guarantees).  Drivers derive one stream per
    (iteration index, purpose) pair via :meth:`substream`, which never touches
    generator state, so replicas and iterations can be evaluated in any order.
    """

    __slots__ = ("seed", "stream", "_gen")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self._gen = None

    def _generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array([self.seed, self.stream], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def uniform(self, n: int | None = None):
        """Uniforms in [0, 1); a scalar float when n is None."""
        return self._generator().random(n)

    def substream(self, *tags: int) -> "RngStream":
        s = self.stream
        for t in tags:
            s = _mix64(s ^ _mix64(int(t) & _MASK64))
        return RngStream(self.seed, s)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"


@dataclass(frozen=True)
class CompressionRule:
    """A compression variant plus its budget.

    kind: one of ``floorceil | indep | systematic | stratified | tbs``.
    m: maximum number of output nonzeros.
    tbs_renormalize: TbS only; rescale output to the input's l1 norm.
    stochastic_order: systematic/stratified only; ordering of the stochastic
        part's cumulative profile (``input`` = ascending index, ``magdesc`` =
        decreasing magnitude).
    """

    kind: str
    m: int
    tbs_renormalize: bool = False
    stochastic_order: str = "input"

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise CompressionError(f"unknown compression kind {self.kind!r}")
        if self.m < 1:
            raise CompressionError("budget m must be >= 1")
        if self.stochastic_order not in STOCHASTIC_ORDERS:
            raise CompressionError(f"unknown stochastic order {self.stochastic_order!r}")


@dataclass(frozen=True)
class SplitResult:
    preserved: SparseVector
    remainder: SparseVector
    tau: int


def _desc_magnitude_order(values: np.ndarray) -> np.ndarray:
    # stable sort on -|v|: ties keep ascending-index (input) order
    return np.argsort(-np.abs(values), kind="stable")


def exact_preservation_split(v: SparseVector, m: int) -> SplitResult:
    """Split v into exactly-preserved entries and a stochastic remainder.

    Entries are moved into ``preserved`` in decreasing magnitude order while
    (m - l) * |v_max| exceeds the l1 mass still unassigned STRICTLY; equality
    stops the loop.  The count ``tau`` of preserved entries then obeys
    l1(remainder) <= (m - tau)/m * l1(v), which is asserted on every call.
    """
    if m < 1:
        raise CompressionError("budget m must be >= 1")
    if v.nnz == 0:
        raise CompressionError("zero vector")
    mags = np.abs(v.values)
    order = _desc_magnitude_order(v.values)
    smags = mags[order]
    # remaining[l] = mass of entries not yet preserved when l have been
    remaining = np.cumsum(smags[::-1])[::-1]
    total = float(remaining[0])
    if total == 0:
        raise CompressionError("zero vector")
    limit = min(m, v.nnz)
    lvals = np.arange(limit, dtype=np.float64)
    stop = remaining[:limit] >= (m - lvals) * smags[:limit]
    tau = int(np.argmax(stop)) if stop.any() else limit
    pres_pos = np.sort(order[:tau])
    rem_pos = np.sort(order[tau:])
    preserved = SparseVector(v.indices[pres_pos], v.values[pres_pos])
    remainder = SparseVector(v.indices[rem_pos], v.values[rem_pos])
    rem_l1 = float(remaining[tau]) if tau < v.nnz else 0.0
    assert rem_l1 <= (m - tau) / m * total, "preservation-threshold bound violated"
    return SplitResult(preserved, remainder, tau)


def _rounded_output(values: np.ndarray, mags: np.ndarray, counts: np.ndarray,
                    unit: float) -> tuple[np.ndarray, np.ndarray]:
    """Entry j becomes counts_j * (v_j/|v_j|) * unit; zero counts are dropped.

    Returns (position mask, new values); phases pass through untouched.
    """
    sel = counts > 0
    new_values = (values[sel] / mags[sel]) * (counts[sel] * unit)
    return sel, new_values


def _counts_floor_ceil(mags: np.ndarray, total: float, budget: int,
                       rng: RngStream) -> np.ndarray:
    w = (budget / total) * mags
    k = np.floor(w)
    frac = w - k
    u = rng.uniform(mags.size)
    return (k + (u < frac)).astype(np.int64)


def _counts_independent_uniform(mags: np.ndarray, total: float, budget: int,
                                rng: RngStream) -> np.ndarray:
    w = (budget / total) * mags
    u = rng.uniform(mags.size)
    return np.floor(w + u).astype(np.int64)


def _profile_counts(mags: np.ndarray, budget: int, positions: np.ndarray) -> np.ndarray:
    """Invert the cumulative |v| profile at the given positions in [0, S)."""
    cum = np.cumsum(mags)
    hit = np.searchsorted(cum, positions * float(cum[-1]), side="right")
    np.clip(hit, 0, mags.size - 1, out=hit)
    return np.bincount(hit, minlength=mags.size)


def _counts_systematic(mags: np.ndarray, budget: int, rng: RngStream) -> np.ndarray:
    u = float(rng.uniform())
    positions = (np.arange(budget) + u) / budget
    return _profile_counts(mags, budget, positions)


def _counts_stratified(mags: np.ndarray, budget: int, rng: RngStream) -> np.ndarray:
    u = rng.uniform(budget)
    positions = (np.arange(budget) + u) / budget
    return _profile_counts(mags, budget, positions)


def _round_remainder(kind: str, remainder: SparseVector, budget: int,
                     rng: RngStream, order: str = "input",
                     allow_zero_output: bool = True,
                     thin_over_budget: bool = True) -> SparseVector:
    if budget < 1:
        raise CompressionError("budget m must be >= 1")
    if remainder.nnz == 0:
        return remainder
    indices = remainder.indices
    values = remainder.values
    if kind in ("systematic", "stratified") and order == "magdesc":
        perm = _desc_magnitude_order(values)
        indices = indices[perm]
        values = values[perm]
    mags = np.abs(values)
    total = float(mags.sum())
    unit = total / budget

    if kind == "floorceil":
        counts = _counts_floor_ceil(mags, total, budget, rng)
    elif kind == "indep":
        counts = _counts_independent_uniform(mags, total, budget, rng)
        if not allow_zero_output:
            # condition on a nonzero result; the zero event has probability
            # at most (l1 ratio)^m, so redraws are almost never taken
            attempts = 0
            while not counts.any():
                attempts += 1
                if attempts >= _MAX_ZERO_REDRAWS:
                    raise CompressionError("all-zero resampling persisted; budget too small")
                counts = _counts_independent_uniform(mags, total, budget, rng)
    elif kind == "systematic":
        counts = _counts_systematic(mags, budget, rng)
    elif kind == "stratified":
        counts = _counts_stratified(mags, budget, rng)
    else:
        raise CompressionError(f"unknown stochastic kind {kind!r}")

    if thin_over_budget and kind in ("floorceil", "indep") and int(counts.sum()) > budget:
        # thin the oversized output back to the budget with one systematic
        # pass; this keeps its l1 norm and expectation
        sel, new_values = _rounded_output(values, mags, counts, unit)
        oversized = _sorted_vector(indices[sel], new_values)
        return _systematic_compress(oversized, budget, rng)

    sel, new_values = _rounded_output(values, mags, counts, unit)
    return _sorted_vector(indices[sel], new_values)


def _sorted_vector(indices: np.ndarray, values: np.ndarray) -> SparseVector:
    order = np.argsort(indices, kind="stable")
    return SparseVector(indices[order], values[order])


def _merge_disjoint(a: SparseVector, b: SparseVector) -> SparseVector:
    if a.nnz == 0:
        return b
    if b.nnz == 0:
        return a
    indices = np.concatenate([a.indices, b.indices])
    values = np.concatenate([a.values, b.values])
    return _sorted_vector(indices, values)


def _systematic_compress(v: SparseVector, m: int, rng: RngStream) -> SparseVector:
    if v.nnz <= m:
        return v
    split = exact_preservation_split(v, m)
    rounded = _round_remainder("systematic", split.remainder, m - split.tau, rng)
    return _merge_disjoint(split.preserved, rounded)


def compress(rule: CompressionRule, v: SparseVector, rng: RngStream | None = None) -> SparseVector:
    """Apply the rule's compression map to v.

    Stochastic kinds are unbiased entrywise and emit at most ``rule.m``
    nonzeros; inputs with nnz <= m pass through unchanged (the preservation
    stage provably forces every remaining weight to 1 in that case, so the
    identity is exact rather than an approximation).
    """
    if rule.kind == "tbs":
        return tbs_truncate(v, rule.m, rule.tbs_renormalize)
    if l1_norm(v) == 0:
        raise CompressionError("zero vector")
    if rng is None:
        raise CompressionError("stochastic compression requires an RngStream")
    if v.nnz <= rule.m:
        return v
    split = exact_preservation_split(v, rule.m)
    rounded = _round_remainder(
        rule.kind,
        split.remainder,
        rule.m - split.tau,
        rng,
        order=rule.stochastic_order,
        allow_zero_output=split.tau > 0,
    )
    return _merge_disjoint(split.preserved, rounded)


def stochastic_round_floor_ceil(remainder: SparseVector, budget: int,
                                rng: RngStream) -> SparseVector:
    """Round each entry independently to floor or ceil of its weight.

    Entry j maps to (v_j/|v_j|) * N_j * S/budget with S = l1(remainder) and
    N_j in {floor(w_j), ceil(w_j)}, w_j = budget*|v_j|/S, taking the ceiling
    with probability w_j - floor(w_j); unbiased entrywise.  The output may
    carry more than ``budget`` nonzeros (use :func:`compress` for the
    budget-enforcing composition) or, rarely, be empty.
    """
    return _round_remainder_checked("floorceil", remainder, budget, rng)


def stochastic_round_independent_uniform(remainder: SparseVector, budget: int,
                                         rng: RngStream) -> SparseVector:
    """Round with N_j = floor(w_j + U_j), one independent uniform per entry."""
    return _round_remainder_checked("indep", remainder, budget, rng)


def stochastic_round_systematic(remainder: SparseVector, budget: int,
                                rng: RngStream, order: str = "input") -> SparseVector:
    """Resample with a single uniform shifted across ``budget`` equal strata.

    Stratum k inverts the cumulative |v| profile at (k-1+U)/budget; entry j
    receives N_j = #{k hitting j} and the value N_j*(v_j/|v_j|)*S/budget.
    One selection per stratum makes the output l1 norm exactly S, with at most
    ``budget`` distinct indices.
    """
    return _round_remainder_checked("systematic", remainder, budget, rng, order)


def stochastic_round_stratified(remainder: SparseVector, budget: int,
                                rng: RngStream, order: str = "input") -> SparseVector:
    """As systematic, but with an independent uniform within each stratum."""
    return _round_remainder_checked("stratified", remainder, budget, rng, order)


def _round_remainder_checked(kind: str, remainder: SparseVector, budget: int,
                             rng: RngStream, order: str = "input") -> SparseVector:
    if budget < 1:
        raise CompressionError("budget m must be >= 1")
    if remainder.nnz and l1_norm(remainder) == 0:
        raise CompressionError("zero vector")
    # the standalone independent-uniform rounding carries both repairs
    # (zero-output redraw, over-budget thinning); the standalone floor/ceil
    # rounding is the raw independent law, so its repairs live in compress()
    allow_zero = kind != "indep"
    thin = kind != "floorceil"
    return _round_remainder(kind, remainder, budget, rng, order=order,
                            allow_zero_output=allow_zero, thin_over_budget=thin)


def tbs_truncate(v: SparseVector, m: int, renormalize: bool = False) -> SparseVector:
    """Keep the m largest-magnitude entries (ties: smaller index first)."""
    if m < 1:
        raise CompressionError("budget m must be >= 1")
    if v.nnz <= m:
        return v
    keep_pos = np.sort(_desc_magnitude_order(v.values)[:m])
    out = SparseVector(v.indices[keep_pos], v.values[keep_pos])
    if renormalize:
        kept = l1_norm(out)
        if kept == 0:
            raise CompressionError("zero vector")
        out = SparseVector(out.indices, out.values * (l1_norm(v) / kept))
    return out
