import numpy as np
import pytest

from fri import (
    all_ones,
    axpy,
    dot,
    dump_lines,
    from_arrays,
    from_pairs,
    indicator,
    l1_norm,
    normalize_l1,
    project_zero,
    scale,
)
from fri.sparse import SparseVector, empty


def rand_vector(gen, n=50, index_space=1000, complex_values=True):
    k = gen.integers(1, n + 1)
    idx = gen.choice(index_space, size=k, replace=False)
    vals = gen.standard_normal(k)
    if complex_values:
        vals = vals + 1j * gen.standard_normal(k)
    return from_pairs(list(zip(idx.tolist(), vals.tolist())))


def test_from_pairs_sorts():
    v = from_pairs([(3, 1 + 0j), (1, 2 + 0j)])
    assert v.to_pairs() == [(1, 2 + 0j), (3, 1 + 0j)]


def test_from_pairs_cancellation():
    v = from_pairs([(1, 1), (1, -1)])
    assert v.nnz == 0


def test_from_pairs_duplicate_merge():
    v = from_pairs([(5, 1 + 1j), (5, 2)])
    assert v.to_pairs() == [(5, 3 + 1j)]


def test_roundtrip_identity():
    gen = np.random.default_rng(1)
    for _ in range(50):
        v = rand_vector(gen)
        assert from_pairs(v.to_pairs()) == v


def test_constructor_rejects_bad_input():
    with pytest.raises(ValueError):
        SparseVector(np.array([2, 1], dtype=np.uint64), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        SparseVector(np.array([1, 1], dtype=np.uint64), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        SparseVector(np.array([1], dtype=np.uint64), np.array([0.0]))


def test_l1_norm():
    assert l1_norm(from_pairs([(0, 3 - 4j)])) == 5.0
    assert l1_norm(empty()) == 0.0
    assert l1_norm(from_pairs([(0, 0.6), (1, -0.4)])) == pytest.approx(1.0)


def test_dot_all_ones():
    v = from_pairs([(0, 0.6), (7, 0.4)])
    assert dot(all_ones(), v) == pytest.approx(1.0)


def test_dot_indicator():
    v = from_pairs([(0, 0.6), (7, 0.4)])
    f = indicator(lambda idx: idx >= 4)
    assert dot(f, v) == pytest.approx(0.4)


def test_dot_conjugates():
    f = from_pairs([(0, 1j)])
    v = from_pairs([(0, 1.0)])
    assert dot(f, v) == pytest.approx(-1j)


def test_scale_to_zero():
    assert scale(from_pairs([(0, 2)]), 0).nnz == 0


def test_axpy_disjoint():
    out = axpy(1, from_pairs([(0, 1)]), from_pairs([(1, 1)]))
    assert out.to_pairs() == [(0, 1 + 0j), (1, 1 + 0j)]


def test_normalize_l1():
    v = normalize_l1(from_pairs([(0, 2), (1, 2)]))
    assert v.to_pairs() == [(0, 0.5 + 0j), (1, 0.5 + 0j)]


def test_normalize_zero_vector_raises():
    with pytest.raises(ValueError, match="zero vector"):
        normalize_l1(empty())


def test_project_zero():
    v = from_pairs([(0, 1), (1, 2)])
    out = project_zero(v, lambda idx: idx == 0)
    assert out.to_pairs() == [(1, 2 + 0j)]
    assert project_zero(v, None) == v
    assert project_zero(v, lambda idx: np.ones(idx.size, dtype=bool)).nnz == 0


def test_dot_linearity():
    gen = np.random.default_rng(2)
    for _ in range(100):
        x = rand_vector(gen)
        y = rand_vector(gen)
        a = complex(gen.standard_normal(), gen.standard_normal())
        f = rand_vector(gen)
        lhs = dot(f, axpy(a, x, y))
        rhs = a * dot(f, x) + dot(f, y)
        scale_ref = abs(lhs) + abs(rhs) + 1.0
        assert abs(lhs - rhs) <= 8 * np.finfo(float).eps * scale_ref


def test_normalize_l1_norm_within_rounding():
    gen = np.random.default_rng(3)
    for _ in range(200):
        v = rand_vector(gen, n=200, index_space=10**6)
        if l1_norm(v) < 1e-6:
            continue
        assert abs(l1_norm(normalize_l1(v)) - 1.0) <= 1e-12


def test_from_arrays_merges_unsorted_duplicates():
    idx = np.array([4, 1, 4, 9, 1], dtype=np.uint64)
    vals = np.array([1.0, 2.0, -1.0, 3.0, 0.5])
    v = from_arrays(idx, vals)
    assert v.to_pairs() == [(1, 2.5 + 0j), (9, 3 + 0j)]


def test_dump_lines_format():
    v = from_pairs([(2, 1.5 - 0.25j), (0, 1.0)])
    assert dump_lines(v) == ["0,1.0,0.0", "2,1.5,-0.25"]


def test_large_indices_preserved():
    big = 2**63 + 17
    v = from_pairs([(big, 1.0), (3, 2.0)])
    assert v.to_pairs() == [(3, 2 + 0j), (big, 1 + 0j)]
