import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smallgain.rules import BlockDims
from smallgain.seqspace import (Box, Diagonal, EmptySetError, Full, Origin, Point, SetSpec, TruncSeq, lp_norm,
                                lp_norm_flat, nearest_point, pair_dist_to_diagonal, set_dist, set_dist_flat)


def test_origin_distance_is_norm():
    x = TruncSeq.from_blocks([[3.0, 4.0], [1.0, 0.0]], p=1.0)
    assert set_dist(x, SetSpec.origin()) == pytest.approx(6.0)
    assert lp_norm(x) == pytest.approx(6.0)


def test_box_and_point_by_hand():
    x = TruncSeq.from_blocks([[2.0], [0.5], [-3.0]], p=2.0)
    A = SetSpec.make((Box((-1.0,), (1.0,)), Point((1.5,))), Origin())
    # blocks: 1 outside the box, 1 from the point, 3 from the origin
    assert set_dist(x, A) == pytest.approx(np.sqrt(1 + 1 + 9))


def test_full_set_distance_zero():
    x = TruncSeq.from_blocks([[5.0, -2.0]], p=2.0)
    assert set_dist(x, SetSpec.make((), Full())) == 0.0


def test_point_prefix_beyond_truncation_counts():
    x = TruncSeq.from_blocks([[0.0]], p=2.0)
    A = SetSpec.make((Origin(), Origin(), Point((2.0,))), Origin())
    assert set_dist(x, A) == pytest.approx(2.0)


def test_lp_norm_p3_against_formula():
    x = TruncSeq.from_blocks([[1.0, 2.0], [2.0, 2.0], [0.0, 1.0]], p=3.0)
    bn = np.array([np.sqrt(5), np.sqrt(8), 1.0])
    assert lp_norm(x) == pytest.approx((bn ** 3).sum() ** (1 / 3), rel=1e-14)


def test_empty_tail_rejected():
    with pytest.raises(EmptySetError):
        SetSpec.make((), Point((1.0,)))
    with pytest.raises(EmptySetError):
        SetSpec.make((), Box((1.0,), (2.0,)))


def test_bad_exponent_and_shapes():
    with pytest.raises(ValueError):
        TruncSeq.from_blocks([[1.0]], p=0.5)
    with pytest.raises(ValueError):
        TruncSeq.from_blocks([[1.0]], p=np.inf)
    with pytest.raises(ValueError):
        TruncSeq(BlockDims.uniform(2), 2, np.zeros(3))
    x = TruncSeq.from_blocks([[1.0, 2.0]])
    with pytest.raises(ValueError):
        set_dist(x, SetSpec.make((Point((1.0,)),), Origin()))


def test_diagonal_pair_identity():
    rng = np.random.default_rng(3)
    for p in (1.0, 2.0, 3.5):
        x = TruncSeq(BlockDims.uniform(2), 6, rng.normal(size=12), p)
        y = TruncSeq(BlockDims.uniform(2), 6, rng.normal(size=12), p)
        assert np.sqrt(2) * pair_dist_to_diagonal(x, y) == pytest.approx(lp_norm(x - y), rel=1e-13)


def test_diagonal_descriptor_on_pairs():
    v = np.array([1.0, 2.0, 3.0, 6.0])
    assert Diagonal().dist(v) == pytest.approx(np.linalg.norm([-2.0, -4.0]) / np.sqrt(2))
    np.testing.assert_allclose(Diagonal().nearest(v), [2.0, 4.0, 2.0, 4.0])


def test_flat_matches_scalar_version():
    rng = np.random.default_rng(0)
    dims = BlockDims((1, 3), 2)
    A = SetSpec.make((Box((-0.5,), (0.5,)), Point((1.0, 0.0, 0.0))), Origin())
    X = rng.normal(size=(7, dims.total(5)))
    flat = set_dist_flat(X, dims, 5, A, 2.0)
    for k in range(7):
        assert flat[k] == pytest.approx(set_dist(TruncSeq(dims, 5, X[k]), A))
    np.testing.assert_allclose(lp_norm_flat(X, dims, 5, 2.0), np.linalg.norm(X, axis=1))



@st.composite
def instance(draw):
    N = draw(st.integers(1, 5))
    n = draw(st.integers(1, 3))
    p = draw(st.sampled_from([1.0, 2.0, 3.0]))
    seed = draw(st.integers(0, 2 ** 31))
    rng = np.random.default_rng(seed)
    pre = []
    for _ in range(N):
        kind = draw(st.sampled_from(["origin", "box", "point", "full"]))
        if kind == "origin":
            pre.append(Origin())
        elif kind == "full":
            pre.append(Full())
        elif kind == "point":
            pre.append(Point(tuple(rng.normal(size=n))))
        else:
            lo = rng.normal(size=n)
            pre.append(Box(tuple(lo), tuple(lo + rng.uniform(0, 2, n))))
    x = TruncSeq(BlockDims.uniform(n), N, rng.normal(size=N * n) * 2, p)
    return x, SetSpec.make(tuple(pre), Origin()), rng


def _sample_member(A, N, n, rng):
    out = []
    for i in range(N):
        d = A[i]
        if isinstance(d, Origin):
            out.append(np.zeros(n))
        elif isinstance(d, Full):
            out.append(rng.normal(size=n) * 3)
        elif isinstance(d, Point):
            out.append(np.array(d.a))
        else:
            out.append(rng.uniform(d.lo, d.hi))
    return np.concatenate(out)


@settings(max_examples=60, deadline=None)
@given(instance())
def test_distance_is_a_minimum(inst):
    x, A, rng = inst
    d = set_dist(x, A)
    a = nearest_point(x, A)
    # attained by the blockwise projection
    assert lp_norm(x - a) == pytest.approx(d, rel=1e-12, abs=1e-14)
    assert set_dist(a, A) == pytest.approx(0.0, abs=1e-12)
    # no sampled member of A is closer
    n = x.dims.tail
    for _ in range(20):
        b = TruncSeq(x.dims, x.N, _sample_member(A, x.N, n, rng), x.p)
        assert lp_norm(x - b) >= d - 1e-12


@settings(max_examples=40, deadline=None)
@given(instance(), st.integers(0, 4))
def test_zero_padding_invariance(inst, extra):
    x, A, _ = inst
    assert set_dist(x.extend(x.N + extra), A) == pytest.approx(set_dist(x, A), rel=1e-13, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(instance(), st.floats(0.1, 10))
def test_norm_homogeneity(inst, c):
    x, _, _ = inst
    y = TruncSeq(x.dims, x.N, c * x.data, x.p)
    assert lp_norm(y) == pytest.approx(c * lp_norm(x), rel=1e-12)
