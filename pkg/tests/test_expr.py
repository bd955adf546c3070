import numpy as np
import pytest

from smallgain.expr import (Aggregate, Apply, Concat, Const, Env, Input, Layout, Lin, Output, Part, Scale, State,
                            Sum, TimeMod, from_dict, substitute, uses_input, uses_time)
from smallgain.rules import BlockDims, BlockRule, ScalarSeq


def run(e, x, N, n=1, t=0.0, u=None, m=0):
    lay = Layout(BlockDims.uniform(n), N, BlockDims.uniform(m) if m else None)
    f, k = e.compile(lay, np.arange(N))
    return f(Env(x, t, u)), k


def test_chain_expression_zero_boundary():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    e = Sum((Scale(-1.0, State()), Scale(0.1, State(-1)), Scale(0.1, State(1))))
    out, k = run(e, x, 4)
    A = -np.eye(4) + 0.1 * (np.eye(4, k=1) + np.eye(4, k=-1))
    np.testing.assert_allclose(out.ravel(), A @ x)
    assert k == 1


def test_batch_axes():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(3, 5, 4))
    e = Sum((State(1), Scale(2.0, State())))
    out, _ = run(e, X, 4)
    for a in range(3):
        for b in range(5):
            ref, _ = run(e, X[a, b], 4)
            np.testing.assert_allclose(out[a, b], ref)


def test_lin_slices_and_concat():
    x = np.arange(6, dtype=float)  # three blocks of size 2
    e = Concat((Lin([[1.0, 1.0]], State()), Part(State(1), 0, 1)))
    out, k = run(e, x, 3, n=2)
    assert k == 2
    np.testing.assert_allclose(out, [[1.0, 2.0], [5.0, 4.0], [9.0, 0.0]])
    with pytest.raises(ValueError):
        run(Lin([[1.0, 1.0, 1.0]], State()), x, 3, n=2)


def test_absolute_and_lo():
    x = np.array([5.0, 1.0, 2.0])
    out, _ = run(State(absolute=0), x, 3)
    np.testing.assert_allclose(out.ravel(), [5.0, 5.0, 5.0])
    out, _ = run(State(-1, lo=1), x, 3)
    np.testing.assert_allclose(out.ravel(), [0.0, 0.0, 1.0])


def test_block_indexed_coefficient_and_guard():
    x = np.ones(4)
    w = ScalarSeq((1.0, 2.0, 3.0), 4.0)
    out, _ = run(Scale(w, State(), guard=1), x, 4)
    np.testing.assert_allclose(out.ravel(), [1.0, 2.0, 3.0, 0.0])


def test_time_and_input():
    e = Sum((TimeMod(State(), -2.0, -1.0), Input()))
    x = np.array([1.0, 2.0])
    out, _ = run(e, x, 2, t=np.pi / 2, u=np.array([0.5, 0.25]), m=1)
    np.testing.assert_allclose(out.ravel(), [-3.0 + 0.5, -6.0 + 0.25])
    assert uses_time(e) and uses_input(e)
    assert not uses_time(e.augment(1, clock=0))


def test_aggregate_normalized():
    w = ScalarSeq((0.0,), 0.5, 0.5)
    e = Aggregate(w, State(), start=1, normalize=True)
    x = np.array([9.0, 1.0, 2.0, 3.0])
    out, _ = run(e, x, 4)
    ws = np.array([0.5, 0.25, 0.125])
    np.testing.assert_allclose(out.ravel(), np.full(4, ws @ x[1:] / ws.sum()))


def test_nonlinearities():
    x = np.array([-2.0, 0.5, 3.0])
    out, _ = run(Apply("sat", State(), limit=1.0), x, 3)
    np.testing.assert_allclose(out.ravel(), [-1.0, 0.5, 1.0])
    lk = Apply("lookup", State(), xs=(-1.0, 0.0, 1.0), ys=(-2.0, 0.0, 1.0))
    assert lk.lipschitz == 2.0
    out, _ = run(lk, x, 3)
    np.testing.assert_allclose(out.ravel(), [-2.0, 0.5, 1.0])
    assert Apply("cubic", State()).lipschitz == np.inf
    with pytest.raises(ValueError):
        Apply("exp", State())


def test_relocate_shifts_reads():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    out, _ = run(State(0).relocate(2), x, 4)
    np.testing.assert_allclose(out.ravel(), [3.0, 4.0, 0.0, 0.0])


def test_augment_keeps_values():
    # block i of the original equals block i+1 of the augmented state
    rng = np.random.default_rng(1)
    x = rng.normal(size=5)
    e = Sum((Scale(-1.0, State()), Scale(0.3, State(-1)), Scale(ScalarSeq((1.0, 2.0), 3.0), State(1), guard=1)))
    base, _ = run(e, x, 5)
    ea = e.augment(1, clock=0)
    lay = Layout(BlockDims.uniform(1), 6)
    f, _ = ea.compile(lay, np.arange(1, 6))
    aug = f(Env(np.concatenate([[7.0], x]), 0.0, None))
    np.testing.assert_allclose(aug, base, atol=1e-15)


def test_output_must_be_substituted():
    with pytest.raises(ValueError):
        run(Output(), np.ones(2), 2)
    e = substitute(Sum((Output(1), State())), lambda n: Scale(3.0, State()).relocate(n.offset)
                   if isinstance(n, Output) else None)
    out, _ = run(e, np.array([1.0, 2.0]), 2)
    np.testing.assert_allclose(out.ravel(), [7.0, 2.0])


def test_from_dict_round_trip():
    d = [{"scale": {"coef": -1.0, "of": {"state": {}}}},
         {"scale": {"coef": {"prefix": [1.0], "tail": 0.5, "ratio": 0.5}, "of": {"state": {"offset": 1}}}},
         {"apply": {"fn": "tanh", "of": {"input": {}}}},
         {"const": [0.25]}]
    e = from_dict(d)
    x = np.array([1.0, 2.0, 3.0])
    u = np.array([0.1, 0.2, 0.3])
    out, _ = run(e, x, 3, u=u, m=1)
    ref = -x + np.array([1.0, 0.5, 0.0]) * np.array([2.0, 3.0, 0.0]) + np.tanh(u) + 0.25
    np.testing.assert_allclose(out.ravel(), ref)
    with pytest.raises(ValueError):
        from_dict({"bogus": {}})
    with pytest.raises(ValueError):
        from_dict({"state": {}, "input": {}})


def test_sum_size_mismatch():
    with pytest.raises(ValueError):
        run(Sum((State(), Const((1.0, 2.0)))), np.ones(2), 2)


def test_block_rule_terms_in_aggregate():
    e = Aggregate(1.0, BlockRule((Scale(10.0, State()),), State()))
    out, _ = run(e, np.array([1.0, 2.0, 3.0]), 3)
    np.testing.assert_allclose(out.ravel(), np.full(3, 15.0))
