import csv

import numpy as np
import pytest
from conftest import chain_matrix, chain_network
from scipy.linalg import expm

from smallgain.expr import Apply, Scale, State, TimeMod
from smallgain.gainop import tridiagonal_spec
from smallgain.netsim import (DistPowV, InputSignal, NetworkSpec, QuadV, SubsystemSpec, integrate, lipschitz_check,
                              truncate, truncation_probe, zero_equilibrium_check)
from smallgain.rules import BlockRule
from smallgain.seqspace import SetSpec, TruncSeq


def test_linear_chain_matches_matrix_exponential(chain):
    N = 50
    x0 = np.random.default_rng(0).uniform(-1, 1, N)
    tr = integrate(truncate(chain, N), x0, None, 2.0, 1e-2)
    np.testing.assert_allclose(tr.states[-1], expm(2.0 * chain_matrix(N)) @ x0, atol=1e-10)
    assert tr.max_defect < 1e-9 and not tr.overflow


def test_constant_input_steady_state(chain):
    N = 30
    u = InputSignal.constant(0.5, N)
    tr = integrate(truncate(chain, N), np.zeros(N), u, 40.0, 1e-2)
    ss = -np.linalg.solve(chain_matrix(N), np.full(N, 0.5))
    np.testing.assert_allclose(tr.states[-1], ss, atol=1e-9)


def test_rk4_fourth_order(chain):
    N = 20
    x0 = np.random.default_rng(1).uniform(-1, 1, N)
    sys = truncate(chain, N)
    exact = expm(chain_matrix(N)) @ x0
    errs = [np.abs(integrate(sys, x0, None, 1.0, h).states[-1] - exact).max() for h in (0.1, 0.05)]
    assert 12 <= errs[0] / errs[1] <= 20


def test_rhs_batch_and_zero_equilibrium(chain):
    sys = truncate(chain, 10)
    X = np.random.default_rng(2).normal(size=(4, 10))
    out = sys.rhs(0.0, X)
    np.testing.assert_allclose(out, X @ chain_matrix(10).T)
    assert zero_equilibrium_check(sys) == 0.0


def test_overflow_flag():
    sub = SubsystemSpec(Scale(50.0, State()), 1, 0)
    net = NetworkSpec(BlockRule((), sub), tridiagonal_spec(0.0), SetSpec.origin())
    tr = integrate(truncate(net, 2), np.ones(2), None, 10.0, 1e-2, overflow=1e10)
    assert tr.overflow
    assert tr.times[-1] < 10.0


def test_time_grid_validation(chain):
    with pytest.raises(ValueError):
        integrate(truncate(chain, 3), np.zeros(3), None, 1.0, 0.3)
    with pytest.raises(ValueError):
        integrate(truncate(chain, 3), np.zeros(4), None, 1.0, 0.1)


def test_prefix_longer_than_truncation():
    sub = SubsystemSpec(Scale(-1.0, State()))
    net = NetworkSpec(BlockRule((sub, sub, sub), sub), tridiagonal_spec(0.0), SetSpec.origin())
    with pytest.raises(ValueError):
        truncate(net, 2)


def test_time_use_requires_flag():
    sub = SubsystemSpec(TimeMod(State(), -2.0, -1.0))
    with pytest.raises(ValueError):
        NetworkSpec(BlockRule((), sub), tridiagonal_spec(0.0), SetSpec.origin())


def test_scalar_time_varying_solution():
    sub = SubsystemSpec(TimeMod(State(), -2.0, -1.0))
    net = NetworkSpec(BlockRule((), sub), tridiagonal_spec(0.0), SetSpec.origin(), time_varying=True)
    tr = integrate(truncate(net, 1), np.array([1.0]), None, 3.0, 1e-3, t0=1.0)
    t = tr.times
    exact = np.exp(-2 * (t - 1.0) + np.cos(t) - np.cos(1.0))
    np.testing.assert_allclose(tr.states[:, 0], exact, rtol=1e-10)


def test_lipschitz_sampling(chain):
    rep = lipschitz_check(chain, 3, pairs=300)
    assert rep["ok"] and rep["sampled"] <= 1.2
    sub = SubsystemSpec(Apply("cubic", State()), lipschitz=1.0)
    net = NetworkSpec(BlockRule((), sub), tridiagonal_spec(0.0), SetSpec.origin())
    assert not lipschitz_check(net, 0, pairs=300, scale=3.0)["ok"]


def test_truncation_probe_small_for_decoupled_tail(chain):
    x0 = TruncSeq.from_blocks([[1.0], [0.5], [-0.5]])
    rep = truncation_probe(chain_network(m=0), 10, 2, x0, None, 2.0, 1e-2)
    assert rep["sup"] < 1e-6


def test_input_signals():
    u = InputSignal.schedule([1.0], [0.0, 2.0], 3)
    assert u.flat(0.5, 4).tolist() == [0, 0, 0, 0]
    assert u.flat(1.5, 4).tolist() == [2, 2, 2, 0]
    assert u.sup_norm(2.0) == pytest.approx(np.sqrt(12))
    s = InputSignal.sinusoid(1.0, 2.0, 0.0, 2)
    np.testing.assert_allclose(s.flat(np.pi / 4, 2), [1.0, 1.0])
    with pytest.raises(ValueError):
        InputSignal.schedule([1.0, 0.5], [0, 1, 2], 2)


def test_local_V_functions():
    from smallgain.seqspace import Origin
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    V = QuadV(P)
    x = np.array([1.0, -1.0])
    assert V.value(x, Origin()) == pytest.approx(x @ P @ x)
    lo, hi = V.alpha_bounds(2, 2.0)
    assert lo == pytest.approx(np.linalg.eigvalsh(P).min())
    with pytest.raises(ValueError):
        QuadV([[1.0, 0.0], [0.0, -1.0]])
    assert DistPowV(3.0, 1.0).value(np.array([3.0, 4.0]), Origin()) == pytest.approx(15.0)


def test_trajectory_csv(tmp_path, chain):
    tr = integrate(truncate(chain, 3), np.array([1.0, 2.0, 3.0]), None, 0.1, 0.05)
    p = tmp_path / "traj.csv"
    tr.to_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["t", "block", "coord", "value"]
    assert len(rows) == 1 + 3 * 3
    assert float(rows[1][3]) == 1.0
