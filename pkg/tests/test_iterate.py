import numpy as np
import pytest

from fri import (
    AffineUpdateMap,
    CompressionRule,
    ExplicitMatrix,
    IterationConfig,
    IterationError,
    OperatorMap,
    all_ones,
    apply_sparse,
    basis_functional,
    deterministic_iterate,
    deterministic_power,
    dot,
    fri_expm,
    fri_iterate,
    fri_iterate_residual,
    fri_power,
    fri_solve,
    from_arrays,
    from_pairs,
    l1_norm,
    write_trajectory_csv,
)
from fri.ising import IsingParams, ising_operator


def dense_of(v, n):
    out = np.zeros(n, dtype=np.complex128)
    out[v.indices.astype(np.int64)] = v.values
    return out


def sys_rule(m):
    return CompressionRule("systematic", m)


def cfg_for(iters, m, seed=1, **kw):
    return IterationConfig(num_iters=iters, rule=sys_rule(m), seed=seed, **kw)


# ------------------------------------------------------------------ power

def test_power_identity_operator():
    K = ExplicitMatrix.from_dense(np.eye(6))
    v0 = from_pairs([(0, 0.25), (3, 0.75)])
    traj = fri_power(K, v0, None, [], cfg_for(20, m=6))
    assert np.allclose(traj.lam, 1.0)
    assert traj.final == v0
    assert np.allclose(traj.l1, 1.0)


def test_power_ising8_matches_dense_eigensolve():
    K = ising_operator(IsingParams(3, 2.2, 0.01))
    v0 = from_pairs([(i, 0.125) for i in range(8)])
    traj = fri_power(K, v0, None, [], cfg_for(400, m=8))
    dense = np.zeros((8, 8))
    for j in range(8):
        rows, vals = K.column(j)
        dense[rows.astype(np.int64), j] = vals.real
    lam_ref = float(np.max(np.linalg.eigvals(dense).real))
    assert abs(complex(traj.lam[-1]).real - lam_ref) <= 1e-10


@pytest.mark.parametrize("dim", [8, 37, 100])
def test_power_bit_identical_to_deterministic(dim):
    gen = np.random.default_rng(dim)
    a = np.abs(gen.standard_normal((dim, dim)))
    a[gen.random((dim, dim)) > 0.3] = 0
    a += np.eye(dim)  # keep it irreducible enough to iterate
    K = ExplicitMatrix.from_dense(a)
    v0 = from_arrays(np.arange(dim, dtype=np.uint64), np.full(dim, 1.0 / dim))
    fs = [basis_functional(0)]
    fri = fri_power(K, v0, None, fs, cfg_for(40, m=dim))
    det = deterministic_power(K, v0, 40, None, fs)
    assert np.array_equal(fri.lam, det.lam)
    assert np.array_equal(fri.f, det.f)
    assert fri.final == det.final


def test_power_l1_normalized_every_step():
    gen = np.random.default_rng(3)
    a = np.abs(gen.standard_normal((12, 12))) + 0.1
    K = ExplicitMatrix.from_dense(a)
    v0 = from_pairs([(0, 1.0)])
    traj = fri_power(K, v0, None, [], cfg_for(50, m=4))
    assert np.allclose(traj.l1, 1.0, atol=1e-12)


def test_power_nonnegative_inputs_stay_nonnegative():
    gen = np.random.default_rng(4)
    a = np.abs(gen.standard_normal((10, 10)))
    K = ExplicitMatrix.from_dense(a)
    v0 = from_pairs([(2, 1.0)])
    for kind in ("floorceil", "indep", "systematic", "stratified"):
        cfg = IterationConfig(num_iters=30, rule=CompressionRule(kind, 4), seed=7)
        traj = fri_power(K, v0, None, [], cfg)
        assert np.all(traj.final.values.real >= 0)
        assert np.all(traj.final.values.imag == 0)


def test_power_forbidden_indices_projected():
    K = ExplicitMatrix.from_dense(np.abs(np.random.default_rng(5).standard_normal((6, 6))) + 0.2)
    v0 = from_pairs([(1, 1.0)])
    cfg = IterationConfig(num_iters=25, rule=sys_rule(6), seed=1,
                          forbidden=lambda idx: idx == 0)
    traj = fri_power(K, v0, None, [], cfg)
    assert 0 not in traj.final.indices


def test_power_degenerate_functional_errors():
    K = ExplicitMatrix.from_dense(np.eye(4))
    v0 = from_pairs([(1, 1.0), (2, -1.0)])
    with pytest.raises(IterationError, match="degenerate"):
        fri_power(K, v0, None, [], cfg_for(5, m=4))


def test_power_collapse_errors():
    K = ExplicitMatrix.from_dense(np.zeros((3, 3)))
    v0 = from_pairs([(0, 1.0)])
    with pytest.raises(IterationError, match="collapsed"):
        fri_power(K, v0, None, [], cfg_for(5, m=3))


def test_power_trajectory_average_restarts_at_burn_in():
    K = ExplicitMatrix.from_dense(np.diag([2.0, 1.0]))
    v0 = from_pairs([(0, 1.0)])
    traj = fri_power(K, v0, None, [], cfg_for(10, m=2, burn_in=4))
    lam = traj.lam
    # average over samples 5..10 only
    assert traj.lam_avg[-1] == pytest.approx(lam[4:].mean())
    assert traj.lam_avg[3] == pytest.approx(lam[:4].mean())


# ------------------------------------------------------------------ generic

def test_iterate_zero_eps_affine_is_constant():
    n = 8
    A = ExplicitMatrix.from_dense(np.zeros((n, n)))
    M = AffineUpdateMap(A, None, 0.0)
    v0 = from_pairs([(0, 0.5), (5, 0.5)])
    traj = fri_iterate(M, v0, cfg_for(10, m=n))
    assert traj.final == v0


def test_iterate_exact_budget_matches_deterministic():
    gen = np.random.default_rng(6)
    n = 12
    a = gen.standard_normal((n, n)) / (2 * np.sqrt(n))
    K = ExplicitMatrix.from_dense(a)
    v0 = from_arrays(np.arange(n, dtype=np.uint64), gen.standard_normal(n))
    fs = [basis_functional(1)]
    fri = fri_iterate(OperatorMap(K), v0, cfg_for(15, m=n), fs)
    det = deterministic_iterate(OperatorMap(K), v0, 15, fs)
    assert np.array_equal(fri.f, det.f)
    assert fri.final == det.final


def test_iterate_linear_map_unbiased():
    gen = np.random.default_rng(7)
    n = 8
    a = gen.standard_normal((n, n))
    a /= 1.2 * np.abs(np.linalg.eigvals(a)).max()
    K = ExplicitMatrix.from_dense(a)
    v0 = from_arrays(np.arange(n, dtype=np.uint64), gen.standard_normal(n))
    f = basis_functional(2)
    t_final = 20
    det = deterministic_iterate(OperatorMap(K), v0, t_final, [f])
    truth = complex(det.f[0, -1])
    reps = 1000
    samples = np.empty(reps, dtype=np.complex128)
    for rep in range(reps):
        traj = fri_iterate(OperatorMap(K), v0, cfg_for(t_final, m=3, seed=1000 + rep), [f])
        samples[rep] = traj.f[0, -1]
    se = samples.std(ddof=1) / np.sqrt(reps)
    assert abs(samples.mean() - truth) <= 5 * se


# ------------------------------------------------------------------ residual

def test_residual_zero_update_constant():
    n = 6
    A = ExplicitMatrix.from_dense(np.zeros((n, n)))
    M = AffineUpdateMap(A, None, 0.05)
    v0 = from_pairs([(1, 1.0)])
    traj = fri_iterate_residual(M, v0, cfg_for(10, m=2))
    assert traj.final == v0


def test_residual_exact_budget_matches_euler():
    gen = np.random.default_rng(8)
    n = 10
    a = gen.standard_normal((n, n)) / n - np.eye(n)
    A = ExplicitMatrix.from_dense(a)
    r = from_arrays(np.arange(n, dtype=np.uint64), gen.standard_normal(n))
    M = AffineUpdateMap(A, r, 0.05)
    v0 = from_pairs([(0, 1.0)])
    fri = fri_iterate_residual(M, v0, cfg_for(30, m=n))
    det = deterministic_iterate(M, v0, 30, residual_form=True)
    assert fri.final == det.final


def test_residual_requires_storable_dim():
    class HugeOracle:
        dim = 1 << 30

    M = AffineUpdateMap(HugeOracle(), None, 0.1)
    with pytest.raises(IterationError, match="storable"):
        fri_iterate_residual(M, from_pairs([(0, 1.0)]), cfg_for(5, m=2))


# ------------------------------------------------------------------ solve

def test_solve_minus_identity_fixed_point():
    n = 6
    A = ExplicitMatrix.from_dense(-np.eye(n))
    b = from_pairs([(i, float(i + 1)) for i in range(n)])
    cfg = cfg_for(10000, m=n, burn_in=9000)
    fs = [basis_functional(i) for i in range(n)]
    summaries = fri_solve(A, b, 0.1, cfg, fs)
    for i, s in enumerate(summaries):
        assert s.mean.real == pytest.approx(-(i + 1), abs=1e-8)


def test_solve_2x2_example():
    A = ExplicitMatrix.from_dense(np.array([[-1.0, 0.1], [0.1, -1.0]]))
    b = from_pairs([(0, 1.0), (1, 1.0)])
    cfg = cfg_for(20000, m=2, burn_in=15000)
    fs = [basis_functional(0), basis_functional(1)]
    summaries = fri_solve(A, b, 0.05, cfg, fs)
    for s in summaries:
        assert s.mean.real == pytest.approx(-10.0 / 9.0, abs=1e-6)


def test_solve_divergence_detected():
    A = ExplicitMatrix.from_dense(np.eye(2))  # positive eigenvalues diverge
    b = from_pairs([(0, 1.0)])
    cfg = cfg_for(100000, m=2)
    with pytest.raises(IterationError, match="unstable"):
        fri_solve(A, b, 0.5, cfg, [basis_functional(0)])


def test_solve_replicated_100dim_within_5pct():
    gen = np.random.default_rng(9)
    n = 100
    off = gen.standard_normal((n, n)) * 0.02
    np.fill_diagonal(off, 0.0)
    a = off - np.eye(n)  # diagonally dominant, eigenvalues near -1
    A = ExplicitMatrix.from_dense(a)
    rhs = gen.standard_normal(n)
    b = from_arrays(np.arange(n, dtype=np.uint64), rhs)
    x_ref = np.linalg.solve(a, rhs)
    f = all_ones()
    truth = float(x_ref.sum())
    cfg = IterationConfig(num_iters=600, rule=sys_rule(50), seed=11,
                          burn_in=300, replicas=100)
    (summary,) = fri_solve(A, b, 0.1, cfg, [f])
    assert abs(summary.mean.real - truth) / abs(truth) < 0.05


# ------------------------------------------------------------------ expm

def test_expm_zero_matrix_is_identity():
    n = 4
    A = ExplicitMatrix.from_dense(np.zeros((n, n)))
    b = from_pairs([(i, 1.0) for i in range(n)])
    fs = [basis_functional(i) for i in range(n)]
    summaries = fri_expm(A, b, 1.0, 0.25, cfg_for(1, m=n), fs)
    for s in summaries:
        assert s.mean.real == pytest.approx(1.0)


def test_expm_diagonal_analytic():
    A = ExplicitMatrix.from_dense(np.diag([-1.0, -2.0]))
    b = from_pairs([(0, 1.0), (1, 1.0)])
    fs = [basis_functional(0), basis_functional(1)]
    summaries = fri_expm(A, b, 1.0, 0.001, cfg_for(1, m=2), fs)
    assert summaries[0].mean.real == pytest.approx(np.exp(-1.0), abs=1e-3)
    assert summaries[1].mean.real == pytest.approx(np.exp(-2.0), abs=1e-3)


def test_expm_replica_mean_within_5se_of_dense():
    from scipy.linalg import expm as dense_expm

    gen = np.random.default_rng(10)
    n = 50
    a = gen.standard_normal((n, n)) / n - 0.5 * np.eye(n)
    A = ExplicitMatrix.from_dense(a)
    x0 = gen.standard_normal(n)
    b = from_arrays(np.arange(n, dtype=np.uint64), x0)
    f = all_ones()
    eps = 0.01
    steps = int(round(1.0 / eps))
    euler = x0.copy()
    for _ in range(steps):
        euler = euler + eps * (a @ euler)
    truth_euler = float(euler.sum())
    cfg = IterationConfig(num_iters=1, rule=sys_rule(25), seed=12, replicas=200)
    (summary,) = fri_expm(A, b, 1.0, eps, cfg, [f])
    se = np.sqrt(summary.variance / summary.n_samples)
    assert abs(summary.mean.real - truth_euler) <= 5 * se
    # and the Euler oracle itself is close to the true exponential
    exact = float((dense_expm(a) @ x0).sum())
    assert abs(truth_euler - exact) < 0.05 * max(1.0, abs(exact))


# ------------------------------------------------------------------ output

def test_write_trajectory_csv(tmp_path):
    K = ExplicitMatrix.from_dense(np.diag([2.0, 1.0]))
    v0 = from_pairs([(0, 0.5), (1, 0.5)])
    traj = fri_power(K, v0, None, [basis_functional(0)], cfg_for(6, m=2))
    path = tmp_path / "traj.csv"
    write_trajectory_csv(str(path), traj, record_every=2)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "t,lambda_re,lambda_im,lambda_avg_re,lambda_avg_im,f0_re,f0_im,nnz,l1"
    assert len(lines) == 1 + 3  # t = 2, 4, 6
    first = lines[1].split(",")
    assert first[0] == "2"
    assert float(first[-1]) == 1.0


def test_records_api():
    K = ExplicitMatrix.from_dense(np.eye(3))
    v0 = from_pairs([(0, 1.0)])
    traj = fri_power(K, v0, None, [], cfg_for(9, m=3))
    recs = traj.records(record_every=3)
    assert [r.t for r in recs] == [3, 6, 9]
    assert all(r.l1 == pytest.approx(1.0) for r in recs)


def test_constant_eps_averaging_schedule():
    K = ExplicitMatrix.from_dense(np.diag([2.0, 1.0]))
    v0 = from_pairs([(0, 1.0)])
    cfg = IterationConfig(num_iters=8, rule=sys_rule(2), seed=1,
                          eps_schedule="constant", averaging_eps=0.25)
    traj = fri_power(K, v0, None, [], cfg)
    # avg_1 = lam_1, then avg <- 0.75 avg + 0.25 lam
    expect = complex(traj.lam[0])
    for k in range(1, 8):
        expect = 0.75 * expect + 0.25 * complex(traj.lam[k])
        assert traj.lam_avg[k] == pytest.approx(expect)
