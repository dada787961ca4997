"""Randomized iteration drivers and their deterministic counterparts.

Each driver interleaves compression with one deterministic update:

  power:    V <- K Phi(V) / ||K Phi(V)||_1, with the eigenvalue functional
            ratio recorded each step
  generic:  V <- M(Phi(V)) for an operator or affine update map
  residual: V <- V + eps * b(Phi(V)) for perturbation-of-identity maps,
            which keeps the compression error from accumulating over 1/eps
            steps at the price of dense iterates

Compression is applied before the operator and normalization after.  With a
budget at or above the attainable number of nonzeros the compression is the
identity, so every driver reproduces its deterministic counterpart bit for
bit; the deterministic drivers are the same loops with compression skipped.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .compress import CompressionRule, RngStream, compress
from .linop import ColumnOracle, apply_sparse
from .sparse import (
    DenseFunctional,
    SparseVector,
    all_ones,
    axpy,
    dot,
    l1_norm,
    project_zero,
    scale,
)
from .stats import EstimateSummary, summarize

__all__ = [
    "IterationError",
    "IterationConfig",
    "TrajectoryRecord",
    "Trajectory",
    "OperatorMap",
    "AffineUpdateMap",
    "fri_power",
    "fri_iterate",
    "fri_iterate_residual",
    "fri_solve",
    "fri_expm",
    "deterministic_power",
    "deterministic_iterate",
    "write_trajectory_csv",
]

DIVERGENCE_FACTOR = 1e6
RESIDUAL_MAX_DIM = 1 << 26

# substream purposes
_PURPOSE_COMPRESS = 0
_PURPOSE_REPLICA = 1


class IterationError(RuntimeError):
    pass


@dataclass(frozen=True)
class IterationConfig:
    """Driver parameters shared by all randomized iterations.

    eps_schedule selects the running-average weights: "reciprocal" restarts
    plain averaging after burn_in, "constant" uses a fixed weight
    (averaging_eps) instead.
    """

    num_iters: int
    rule: CompressionRule
    seed: int
    burn_in: int = 0
    eps_schedule: str = "reciprocal"
    averaging_eps: float = 0.1
    forbidden: Callable[[np.ndarray], np.ndarray] | None = None
    record_every: int = 1
    replicas: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.num_iters < 1:
            raise ValueError("num_iters must be >= 1")
        if not 0 <= self.burn_in < self.num_iters:
            raise ValueError("burn_in must satisfy 0 <= burn_in < num_iters")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.eps_schedule not in ("reciprocal", "constant"):
            raise ValueError(f"unknown eps schedule {self.eps_schedule!r}")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class TrajectoryRecord:
    t: int
    lam: complex
    lam_avg: complex
    f_values: tuple[complex, ...]
    nnz: int
    l1: float


@dataclass
class Trajectory:
    """Per-iteration outputs of one driver run (iteration index t = 1..T)."""

    t: np.ndarray
    lam: np.ndarray
    lam_avg: np.ndarray
    f: np.ndarray  # shape (n_functionals, T)
    nnz: np.ndarray
    l1: np.ndarray
    burn_in: int
    functional_names: tuple[str, ...] = field(default_factory=tuple)
    final: SparseVector | None = None

    def records(self, record_every: int = 1) -> list[TrajectoryRecord]:
        out = []
        for k in range(len(self.t)):
            t = int(self.t[k])
            if t % record_every == 0:
                out.append(
                    TrajectoryRecord(
                        t=t,
                        lam=complex(self.lam[k]),
                        lam_avg=complex(self.lam_avg[k]),
                        f_values=tuple(complex(x) for x in self.f[:, k]),
                        nnz=int(self.nnz[k]),
                        l1=float(self.l1[k]),
                    )
                )
        return out

    def lambda_summary(self) -> EstimateSummary:
        return summarize(self.lam, self.burn_in)

    def functional_summaries(self) -> list[EstimateSummary]:
        return [summarize(self.f[i], self.burn_in) for i in range(self.f.shape[0])]


class _RunningAverage:
    """Running-mean recursion avg <- (1-eps_t) avg + eps_t x.

    The reciprocal schedule uses eps_t = 1/(t - burn_in + 1) once past
    burn-in, which makes the average a plain trajectory mean restarted at the
    burn-in point.
    """

    def __init__(self, schedule: str, burn_in: int, constant_eps: float):
        self.schedule = schedule
        self.burn_in = burn_in
        self.constant_eps = constant_eps
        self.value = 0j
        self.count = 0

    def update(self, sample_index: int, x: complex) -> complex:
        if sample_index == self.burn_in + 1:
            self.count = 0
        self.count += 1
        if self.schedule == "reciprocal":
            eps = 1.0 / self.count
        else:
            eps = 1.0 if self.count == 1 else self.constant_eps
        self.value = (1.0 - eps) * self.value + eps * x
        return self.value


class OperatorMap:
    """v -> K v."""

    def __init__(self, K: ColumnOracle):
        self.K = K

    @property
    def dim(self) -> int:
        return self.K.dim

    def __call__(self, v: SparseVector) -> SparseVector:
        return apply_sparse(self.K, v)


class AffineUpdateMap:
    """v -> v + eps * b(v) with b(v) = A v - r (r may be None)."""

    def __init__(self, A: ColumnOracle, r: SparseVector | None, eps: float):
        self.A = A
        self.r = r
        self.eps = eps

    @property
    def dim(self) -> int:
        return self.A.dim

    def residual(self, v: SparseVector) -> SparseVector:
        b = apply_sparse(self.A, v)
        if self.r is not None:
            b = axpy(-1.0, self.r, b)
        return b

    def __call__(self, v: SparseVector) -> SparseVector:
        return axpy(self.eps, self.residual(v), v)


def _compressor(rule: CompressionRule | None, seed: int, stream_root: RngStream | None):
    if rule is None:
        return lambda t, v: v
    root = stream_root if stream_root is not None else RngStream(seed)

    def step(t: int, v: SparseVector) -> SparseVector:
        return compress(rule, v, root.substream(_PURPOSE_COMPRESS, t))

    return step


def _power_loop(K: ColumnOracle, v0: SparseVector, u: DenseFunctional,
                fs: Sequence[DenseFunctional], num_iters: int, burn_in: int,
                eps_schedule: str, averaging_eps: float,
                forbidden, compress_step) -> Trajectory:
    if l1_norm(v0) == 0:
        raise IterationError("zero start vector")
    V = scale(v0, 1.0 / l1_norm(v0))
    nf = len(fs)
    lam_arr = np.empty(num_iters, dtype=np.complex128)
    lam_avg_arr = np.empty(num_iters, dtype=np.complex128)
    f_arr = np.empty((nf, num_iters), dtype=np.complex128)
    nnz_arr = np.empty(num_iters, dtype=np.int64)
    l1_arr = np.empty(num_iters, dtype=np.float64)
    avg = _RunningAverage(eps_schedule, burn_in, averaging_eps)
    for t in range(num_iters):
        Y = compress_step(t, V)
        W = apply_sparse(K, Y)
        if l1_norm(W) == 0:
            raise IterationError("iterate collapsed")
        denom = dot(u, V)
        if denom == 0:
            raise IterationError("degenerate eigenvalue functional")
        lam = dot(u, W) / denom
        W = project_zero(W, forbidden)
        nrm = l1_norm(W)
        if nrm == 0:
            raise IterationError("iterate collapsed")
        V = scale(W, 1.0 / nrm)
        lam_arr[t] = lam
        lam_avg_arr[t] = avg.update(t + 1, lam)
        for i, f in enumerate(fs):
            f_arr[i, t] = dot(f, V)
        nnz_arr[t] = V.nnz
        l1_arr[t] = l1_norm(V)
    return Trajectory(
        t=np.arange(1, num_iters + 1, dtype=np.int64),
        lam=lam_arr,
        lam_avg=lam_avg_arr,
        f=f_arr,
        nnz=nnz_arr,
        l1=l1_arr,
        burn_in=burn_in,
        functional_names=tuple(f.name for f in fs),
        final=V,
    )


def fri_power(K: ColumnOracle, v0: SparseVector, u: DenseFunctional | None,
              fs: Sequence[DenseFunctional], cfg: IterationConfig) -> Trajectory:
    """Randomized power iteration with per-step compression.

    The eigenvalue estimate at step t+1 is dot(u, K Phi(V_t)) / dot(u, V_t)
    with the numerator taken before normalization; u defaults to the all-ones
    functional, which for nonnegative problems is the l1 growth ratio.
    """
    u = u if u is not None else all_ones()
    comp = _compressor(cfg.rule, cfg.seed, None)
    return _power_loop(
        K, v0, u, fs, cfg.num_iters, cfg.burn_in,
        cfg.eps_schedule, cfg.averaging_eps, cfg.forbidden, comp,
    )


def deterministic_power(K: ColumnOracle, v0: SparseVector, iters: int,
                        u: DenseFunctional | None,
                        fs: Sequence[DenseFunctional] = (),
                        burn_in: int = 0) -> Trajectory:
    """Plain power iteration; the oracle for fri_power."""
    u = u if u is not None else all_ones()
    return _power_loop(
        K, v0, u, fs, iters, burn_in, "reciprocal", 0.1, None,
        lambda t, v: v,
    )


def _generic_loop(M, v0: SparseVector, fs: Sequence[DenseFunctional],
                  num_iters: int, burn_in: int, compress_step,
                  residual_form: bool, divergence_limit: float | None) -> Trajectory:
    V = v0
    nf = len(fs)
    lam_arr = np.full(num_iters, np.nan, dtype=np.complex128)
    f_arr = np.empty((nf, num_iters), dtype=np.complex128)
    nnz_arr = np.empty(num_iters, dtype=np.int64)
    l1_arr = np.empty(num_iters, dtype=np.float64)
    for t in range(num_iters):
        Y = compress_step(t, V)
        if residual_form:
            V = axpy(M.eps, M.residual(Y), V)
        else:
            V = M(Y)
        nrm = l1_norm(V)
        if nrm == 0:
            raise IterationError("iterate collapsed")
        if divergence_limit is not None and nrm > divergence_limit:
            raise IterationError("unstable; increase m or decrease eps")
        for i, f in enumerate(fs):
            f_arr[i, t] = dot(f, V)
        nnz_arr[t] = V.nnz
        l1_arr[t] = nrm
    return Trajectory(
        t=np.arange(1, num_iters + 1, dtype=np.int64),
        lam=lam_arr,
        lam_avg=lam_arr.copy(),
        f=f_arr,
        nnz=nnz_arr,
        l1=l1_arr,
        burn_in=burn_in,
        functional_names=tuple(f.name for f in fs),
        final=V,
    )


def fri_iterate(M: OperatorMap | AffineUpdateMap, v0: SparseVector,
                cfg: IterationConfig, fs: Sequence[DenseFunctional] = (),
                divergence_limit: float | None = None) -> Trajectory:
    """Generic compressed iteration V <- M(Phi(V))."""
    if l1_norm(v0) == 0:
        raise IterationError("zero start vector")
    comp = _compressor(cfg.rule, cfg.seed, None)
    return _generic_loop(M, v0, fs, cfg.num_iters, cfg.burn_in, comp,
                         residual_form=False, divergence_limit=divergence_limit)


def fri_iterate_residual(M: AffineUpdateMap, v0: SparseVector,
                         cfg: IterationConfig,
                         fs: Sequence[DenseFunctional] = ()) -> Trajectory:
    """Perturbation-of-identity iteration V <- V + eps * b(Phi(V)).

    Only the residual sees the compressed vector, so compression errors enter
    scaled by eps and self-average; the iterates themselves fill in (dense),
    so the operator dimension must be small enough to store them.
    """
    if l1_norm(v0) == 0:
        raise IterationError("zero start vector")
    if M.dim > RESIDUAL_MAX_DIM:
        raise IterationError("residual scheme requires storable iterates")
    comp = _compressor(cfg.rule, cfg.seed, None)
    return _generic_loop(M, v0, fs, cfg.num_iters, cfg.burn_in, comp,
                         residual_form=True, divergence_limit=None)


def deterministic_iterate(M, v0: SparseVector, num_iters: int,
                          fs: Sequence[DenseFunctional] = (),
                          residual_form: bool = False) -> Trajectory:
    """Uncompressed iteration; the oracle for fri_iterate / fri_iterate_residual."""
    return _generic_loop(M, v0, fs, num_iters, 0, lambda t, v: v,
                         residual_form=residual_form, divergence_limit=None)


def _replica_map(cfg: IterationConfig, worker) -> list:
    """Evaluate worker(replica_index, replica_stream) for every replica.

    Results are reduced in replica-index order whatever the thread count, so
    the aggregate is deterministic.
    """
    root = RngStream(cfg.seed)
    streams = [root.substream(_PURPOSE_REPLICA, r) for r in range(cfg.replicas)]
    if cfg.threads == 1 or cfg.replicas == 1:
        return [worker(r, streams[r]) for r in range(cfg.replicas)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        futures = [pool.submit(worker, r, streams[r]) for r in range(cfg.replicas)]
        return [f.result() for f in futures]


def _summaries_over_replicas(estimates: np.ndarray,
                             burn_in_used: int) -> list[EstimateSummary]:
    """Summaries of per-replica estimates (rows: functionals, cols: replicas)."""
    out = []
    nf, n = estimates.shape
    for i in range(nf):
        series = estimates[i]
        if n >= 10:
            out.append(summarize(series, 0))
        else:
            # replicas are independent, so no autocorrelation correction
            mean = complex(series.mean())
            var = float((np.abs(series - mean) ** 2).sum() / max(n - 1, 1))
            half = 1.96 * float(np.sqrt(var / n))
            out.append(EstimateSummary(mean, var, 1.0, half, n, burn_in_used))
    return out


def fri_solve(A: ColumnOracle, r: SparseVector, eps: float,
              cfg: IterationConfig, fs: Sequence[DenseFunctional]
              ) -> list[EstimateSummary]:
    """Estimate functionals of the solution of A x = r.

    Runs the compressed fixed-point iteration v <- v + eps*(A v - r), whose
    fixed point is A^{-1} r when all eigenvalues of A have negative real part
    (caller's responsibility; eps * ||A||_1 < 1 recommended).  Reports
    trajectory-averaged f . V_t after burn-in; with several replicas the
    per-replica averages are averaged again and their spread sets the
    confidence width.
    """
    if l1_norm(r) == 0:
        raise IterationError("zero right-hand side")
    M = AffineUpdateMap(A, r, eps)
    v0 = scale(r, -eps)
    limit = DIVERGENCE_FACTOR * l1_norm(v0)

    def run_replica(stream: RngStream) -> Trajectory:
        comp = _compressor(cfg.rule, cfg.seed, stream)
        return _generic_loop(M, v0, fs, cfg.num_iters, cfg.burn_in, comp,
                             residual_form=False, divergence_limit=limit)

    if cfg.replicas == 1:
        traj = run_replica(RngStream(cfg.seed).substream(_PURPOSE_REPLICA, 0))
        return traj.functional_summaries()

    def worker(replica: int, stream: RngStream) -> np.ndarray:
        traj = run_replica(stream)
        return traj.f[:, cfg.burn_in:].mean(axis=1)

    results = _replica_map(cfg, worker)
    estimates = np.stack(results, axis=1)
    return _summaries_over_replicas(estimates, cfg.burn_in)


def fri_expm(A: ColumnOracle, b: SparseVector, T: float, eps: float,
             cfg: IterationConfig, fs: Sequence[DenseFunctional]
             ) -> list[EstimateSummary]:
    """Estimate functionals of exp(T A) b by compressed Euler stepping.

    Runs ceil(T/eps) steps of v <- v + eps * A v with per-step compression
    and reports f . V at the final step, averaged over replicas.
    """
    if l1_norm(b) == 0:
        raise IterationError("zero start vector")
    if T < 0 or eps <= 0:
        raise IterationError("need T >= 0 and eps > 0")
    steps = max(1, int(np.ceil(T / eps - 1e-12)))
    M = AffineUpdateMap(A, None, eps)
    limit = DIVERGENCE_FACTOR * l1_norm(b)

    def worker(replica: int, stream: RngStream) -> np.ndarray:
        comp = _compressor(cfg.rule, cfg.seed, stream)
        traj = _generic_loop(M, b, fs, steps, 0, comp,
                             residual_form=False, divergence_limit=limit)
        return traj.f[:, -1]

    results = _replica_map(cfg, worker)
    estimates = np.stack(results, axis=1)
    return _summaries_over_replicas(estimates, 0)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(path: str, traj: Trajectory, record_every: int = 1) -> None:
    """Trajectory CSV: one row per recorded iteration, round-trip decimals."""
    nf = traj.f.shape[0]
    cols = ["t", "lambda_re", "lambda_im", "lambda_avg_re", "lambda_avg_im"]
    for i in range(nf):
        cols += [f"f{i}_re", f"f{i}_im"]
    cols += ["nnz", "l1"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(len(traj.t)):
            t = int(traj.t[k])
            if t % record_every:
                continue
            row = [
                str(t),
                _fmt(traj.lam[k].real), _fmt(traj.lam[k].imag),
                _fmt(traj.lam_avg[k].real), _fmt(traj.lam_avg[k].imag),
            ]
            for i in range(nf):
                row += [_fmt(traj.f[i, k].real), _fmt(traj.f[i, k].imag)]
            row += [str(int(traj.nnz[k])), _fmt(traj.l1[k])]
            fh.write(",".join(row) + "\n")
