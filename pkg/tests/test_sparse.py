import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asyncomid.sparse import (
    DimensionError, SparseVec, axpy_sparse, l2_norm, nnz, sparse_dot,
)
from asyncomid.data import gen_synthetic


def sv(d, dim):
    return SparseVec.from_dict(d, dim)


def test_dot_empty_support():
    assert sparse_dot(SparseVec.empty(5), np.arange(5.0)) == 0.0


def test_dot_zero_model():
    assert sparse_dot(sv({0: 1.0}, 3), np.zeros(3)) == 0.0


def test_dot_hand_sum():
    assert sparse_dot(sv({1: 2.0, 3: 0.5}, 4), np.ones(4)) == 2.5


def test_dot_dimension_mismatch():
    with pytest.raises(DimensionError):
        sparse_dot(sv({0: 1.0}, 3), np.ones(4))


def test_axpy_zero_scale_leaves_w():
    w = np.array([1.0, -2.0])
    out = axpy_sparse(w, 0.0, sv({0: 3.0}, 2))
    assert np.array_equal(out, w)


def test_axpy_unit_cancellation():
    out = axpy_sparse(np.array([1.0, 1.0]), -1.0, sv({0: 1.0}, 2))
    assert np.array_equal(out, [0.0, 1.0])


def test_axpy_single_entry():
    out = axpy_sparse(np.array([2.0, 3.0]), 0.5, sv({1: 4.0}, 2))
    assert np.array_equal(out, [2.0, 5.0])


def test_axpy_does_not_mutate_input():
    w = np.array([2.0, 3.0])
    axpy_sparse(w, 0.5, sv({1: 4.0}, 2))
    assert np.array_equal(w, [2.0, 3.0])


def test_axpy_dimension_mismatch():
    with pytest.raises(DimensionError):
        axpy_sparse(np.ones(2), 1.0, sv({0: 1.0}, 3))


def test_nnz():
    assert nnz(SparseVec.empty(4)) == 0
    assert nnz(sv({0: 1.0}, 4)) == 1


def test_nnz_matches_generator_count():
    data = gen_synthetic(50, 30, (3, 9), seed=1)
    for s in data.samples:
        assert nnz(s.x) == len(s.x.indices)
        assert 3 <= nnz(s.x) <= 9


def test_l2_norm_examples():
    assert l2_norm(np.zeros(3)) == 0.0
    assert l2_norm(np.array([3.0, 4.0])) == 5.0
    assert l2_norm(sv({2: 1.0, 5: 1.0}, 8)) == pytest.approx(math.sqrt(2.0), abs=1e-15)


@pytest.mark.parametrize("idx,vals", [
    ([1, 0], [1.0, 1.0]),
    ([0, 0], [1.0, 1.0]),
    ([0], [0.0]),
    ([5], [1.0]),
])
def test_invalid_construction(idx, vals):
    with pytest.raises(ValueError):
        SparseVec(np.array(idx), np.array(vals), 3)


def test_from_pairs_sorts_and_drops_zeros():
    x = SparseVec.from_pairs([(3, 1.0), (0, 2.0), (1, 0.0)], 4)
    assert x.indices.tolist() == [0, 3]
    assert x.values.tolist() == [2.0, 1.0]


def test_from_pairs_rejects_duplicates():
    with pytest.raises(ValueError):
        SparseVec.from_pairs([(1, 1.0), (1, 2.0)], 4)


def test_scaled_by_zero_is_empty():
    assert nnz(sv({0: 1.0, 2: 3.0}, 3).scaled(0.0)) == 0


entries = st.dictionaries(
    st.integers(0, 19),
    st.floats(-1e3, 1e3, allow_nan=False).filter(lambda v: v != 0.0),
    max_size=20,
)
dense = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=20, max_size=20)


@settings(max_examples=200, deadline=None)
@given(entries, dense)
def test_dot_matches_dense(d, w):
    x = sv(d, 20)
    w = np.array(w)
    assert sparse_dot(x, w) == pytest.approx(float(x.to_dense() @ w), rel=1e-12, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(entries, dense, st.floats(-10, 10, allow_nan=False))
def test_axpy_touches_only_support(d, w, a):
    x = sv(d, 20)
    w = np.array(w)
    out = axpy_sparse(w, a, x)
    off = np.setdiff1d(np.arange(20), x.indices)
    assert np.array_equal(out[off], w[off])
    assert np.allclose(out, w + a * x.to_dense(), rtol=1e-12, atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(entries)
def test_dense_round_trip(d):
    x = sv(d, 20)
    assert SparseVec.from_dense(x.to_dense()) == x
    assert l2_norm(x) == pytest.approx(l2_norm(x.to_dense()), rel=1e-12)
