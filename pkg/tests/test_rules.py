import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smallgain.rules import BlockDims, BlockRule, ScalarSeq


def test_prefix_then_constant_tail():
    s = ScalarSeq((3.0, 2.0), 1.0)
    assert s.at(0) == 3.0 and s.at(1) == 2.0 and s.at(50) == 1.0
    np.testing.assert_array_equal(s.at(np.arange(4)), [3.0, 2.0, 1.0, 1.0])


def test_geometric_tail_sum_and_inf():
    s = ScalarSeq((), 0.5, 0.5)
    assert s.total() == pytest.approx(1.0, abs=1e-15)
    assert s.inf() == 0.0
    assert s.sup() == 0.5
    assert s.at(3) == 0.5 ** 4


def test_shift_negative_indices_are_zero():
    s = ScalarSeq((1.0, 2.0), 3.0).shift(-2)
    np.testing.assert_array_equal(s.at(np.arange(5)), [0.0, 0.0, 1.0, 2.0, 3.0])


def test_reciprocal_keeps_zero():
    s = ScalarSeq((0.0, 4.0), 2.0).reciprocal()
    np.testing.assert_array_equal(s.at(np.arange(3)), [0.0, 0.25, 0.5])


def test_bad_ratio_rejected():
    with pytest.raises(ValueError):
        ScalarSeq((), 1.0, 1.5)


def test_block_rule_groups():
    r = BlockRule(("a", "b"), "t")
    g = r.groups(5)
    assert [v for v, _ in g] == ["a", "b", "t"]
    np.testing.assert_array_equal(g[-1][1], [2, 3, 4])
    assert r[10] == "t"
    with pytest.raises(ValueError):
        BlockRule(("a",), None)


def test_block_dims():
    d = BlockDims((2, 3), 1)
    np.testing.assert_array_equal(d.starts(4), [0, 2, 5, 6, 7])
    assert d.total(4) == 7
    assert d.prepend(1)[0] == 1 and d.prepend(1)[1] == 2
    with pytest.raises(ValueError):
        BlockDims((0,), 1)


@given(st.lists(st.floats(0.01, 10), max_size=6), st.floats(0.01, 10), st.floats(0.05, 0.95), st.integers(0, 8))
def test_geometric_total_matches_partial_sums(prefix, tail, ratio, start):
    s = ScalarSeq(tuple(prefix), tail, ratio)
    n = 2000
    brute = s.at(np.arange(start, start + n)).sum()
    assert s.total(start) == pytest.approx(brute, rel=1e-9)
    assert s.sup(start) == pytest.approx(s.at(np.arange(start, start + n)).max())
