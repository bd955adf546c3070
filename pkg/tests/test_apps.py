import numpy as np
import pytest
from conftest import chain_network

from smallgain.apps import (ConsensusSpec, ObserverSpec, average_drift, build_consensus_error_system,
                            build_observer_composite, build_original_system, clock_augment, consensus_metrics,
                            observer_error_decay, simulate_from, to_error_coordinates, ueiss_check,
                            weighted_average)
from smallgain.apps.observer import split_pairs
from smallgain.expr import Output, Scale, State, Sum, TimeMod
from smallgain.gainop import BandedKernel, GainSpec, analyze
from smallgain.netsim import NetworkSpec, QuadV, SubsystemSpec, integrate, truncate
from smallgain.rules import BlockRule, ScalarSeq
from smallgain.seqspace import SetSpec, set_dist_flat


def tv_net(c0=-2.0, c1=-1.0, lam=2.0):
    sub = SubsystemSpec(TimeMod(State(), c0, c1), V=QuadV.scalar())
    g = GainSpec(lam=ScalarSeq.const(lam), gamma_u=ScalarSeq.const(0.0))
    return NetworkSpec(BlockRule((), sub), g, SetSpec.origin(), time_varying=True)


# time-varying -------------------------------------------------------------


def test_clock_rhs_and_distance():
    aug = clock_augment(tv_net())
    sys = truncate(aug.augmented, 3)
    x = np.array([0.3, 1.0, -2.0])
    out = sys.rhs(123.0, x)
    assert out[0] == 1.0
    np.testing.assert_allclose(out[1:], -(2 + np.sin(0.3)) * x[1:])
    d = set_dist_flat(x, aug.augmented.dims, 3, aug.augmented.sets, 2.0)
    assert d == pytest.approx(np.linalg.norm(x[1:]))


def test_clock_requires_time_varying():
    with pytest.raises(ValueError):
        clock_augment(chain_network())


def test_augmented_gain_certificate():
    aug = clock_augment(tv_net())
    g = aug.augmented.gain
    assert 0 in g.null_blocks and g.lam.at(0) == 1.0 and g.lam.at(1) == 2.0
    an = analyze(g)
    assert an.status == "certified"
    assert an.certificate.lambda_inf == pytest.approx(2.0)


def test_augmented_reproduces_shifted_base():
    tv = tv_net()
    aug = clock_augment(tv)
    z0 = np.array([1.0, -0.5])
    base = integrate(truncate(tv, 2), z0, None, 3.0, 1e-3, t0=5.0)
    a = simulate_from(aug, 5.0, z0, None, 3.0, 1e-3, 2)
    np.testing.assert_allclose(a.states[:, 1:], base.states, atol=1e-8)
    # integrating-factor oracle
    s = a.times
    exact = np.exp(-2 * s + np.cos(5.0 + s) - np.cos(5.0))
    np.testing.assert_allclose(a.states[:, 1], exact, rtol=1e-9)


def test_autonomous_base_identical_fits():
    sub = SubsystemSpec(Scale(-1.0, State()))
    net = NetworkSpec(BlockRule((), sub), GainSpec(lam=ScalarSeq.const(2.0)), SetSpec.origin(), time_varying=True)
    rep = ueiss_check(clock_augment(net), 1.0, 1.0, [0.0, 3.0], [np.array([1.0])], None, 2.0, 1e-2)
    assert rep["passed"]
    assert rep["runs"][0]["a_fit"] == pytest.approx(rep["runs"][1]["a_fit"], rel=1e-12)


def test_uniform_envelope_over_initial_times():
    rep = ueiss_check(clock_augment(tv_net()), np.e, 1.0, [0.0, np.pi / 2, 7.0], [np.array([1.0, 2.0])],
                      None, 5.0, 1e-3)
    assert rep["passed"] and rep["common_fit"]["a"] >= 1.0


def test_unstable_base_fails():
    net = tv_net(c0=1.0, c1=0.0)
    rep = ueiss_check(clock_augment(net), np.e, 1.0, [0.0, 1.0], [np.array([1.0])], None, 2.0, 1e-3)
    assert not rep["passed"] and rep["unstable"]
    assert rep["common_fit"]["a"] < 0


# consensus ----------------------------------------------------------------


def cspec(f=None, sigma=0.5):
    return ConsensusSpec(f=f if f is not None else Scale(-1.0, State()), alpha=ScalarSeq((), 0.5, 0.5), sigma=sigma)


def test_consensus_spec_validation():
    with pytest.raises(ValueError):
        ConsensusSpec(f=State(), alpha=ScalarSeq((), 0.4, 0.5), sigma=0.5)
    with pytest.raises(ValueError):
        ConsensusSpec(f=State(), alpha=ScalarSeq((0.5,), 0.5), sigma=0.5)
    with pytest.raises(ValueError):
        ConsensusSpec(f=State(), alpha=ScalarSeq((), 0.5, 0.5), sigma=0.5, weight=0.5)
    with pytest.raises(ValueError):
        ConsensusSpec(f=State(1), alpha=ScalarSeq((), 0.5, 0.5), sigma=0.5)
    ConsensusSpec(f=State(), alpha=ScalarSeq((0.25, 0.25), 0.25, 0.5), sigma=0.5)


def test_error_coordinates_consistent():
    cs = cspec()
    N = 12
    x0 = np.random.default_rng(0).uniform(-1, 1, N)
    orig = integrate(truncate(build_original_system(cs), N), x0, None, 2.0, 1e-3)
    err = integrate(truncate(build_consensus_error_system(cs), N + 1), to_error_coordinates(cs, x0, N), None,
                    2.0, 1e-3)
    np.testing.assert_allclose(to_error_coordinates(cs, orig.states, N), err.states, atol=1e-10)
    # weighted errors sum to zero
    assert np.abs(err.states[:, 1:].sum(axis=1)).max() < 1e-14


def test_average_conserved_without_drift():
    cs = cspec(f=Scale(0.0, State()))
    N = 20
    x0 = np.random.default_rng(1).normal(size=N)
    tr = integrate(truncate(build_original_system(cs), N), x0, None, 5.0, 1e-2)
    assert average_drift(cs, tr) < 1e-12


def test_consensus_reached_is_equilibrium():
    cs = cspec()
    net = build_consensus_error_system(cs)
    sys = truncate(net, 6)
    xa = 0.7
    out = sys.rhs(0.0, np.array([xa, 0, 0, 0, 0, 0.0]))
    np.testing.assert_allclose(out[1:], 0.0, atol=1e-15)
    assert out[0] == pytest.approx(-xa)


def test_consensus_metrics_zero_error():
    cs = cspec()
    N = 5
    x0 = np.full(N, 0.3)
    tr = integrate(truncate(build_consensus_error_system(cs), N + 1), to_error_coordinates(cs, x0, N), None,
                   1.0, 1e-2)
    m = consensus_metrics(tr, cs, 2.0, 0.5)
    assert m["passed"]
    assert np.abs(tr.states[:, 1:]).max() < 1e-15
    assert all(r["min_margin"] >= 0.0 for r in m["modes"])


def test_consensus_metrics_tables():
    cs = cspec()
    net = build_consensus_error_system(cs)
    an = analyze(net.gain)
    assert an.status == "certified"
    N = 15
    x0 = np.random.default_rng(2).uniform(-1, 1, N)
    tr = integrate(truncate(net, N + 1), to_error_coordinates(cs, x0, N), None, 3.0, 1e-3)
    m = consensus_metrics(tr, cs, an.certificate.M, an.certificate.a)
    assert m["passed"] and m["fitted"]["a"] > 0
    # partial sum with one mode is the per-mode bound of the smallest weight
    assert m["partial_sums"][0]["min_margin"] == pytest.approx(m["modes"][0]["min_margin"])
    assert weighted_average(cs, tr.states[:1, 1:] * 0, N).shape == (1, 1)


# observer -----------------------------------------------------------------


def luenberger(A=0.5, C=1.0, K=2.5, c=0.2, gain=None):
    f = Sum((Scale(A, State()), Scale(c, State(-1)), Scale(c, State(1))))
    h = Scale(C, State())
    fh = Sum((Scale(A, State()), Scale(c, State(-1)), Scale(c, State(1)), Scale(K, Output()),
              Scale(-K * C, State())))
    g = gain or GainSpec(lam=ScalarSeq.const(4 - 2 * c), kernel=BandedKernel.tridiagonal(c),
                         gamma_u=ScalarSeq.const(0.0))
    return ObserverSpec(f, h, fh, 1, 1, g)


def test_observer_error_matches_closed_form():
    os_ = luenberger()
    net = build_observer_composite(os_)
    N = 20
    rng = np.random.default_rng(0)
    x0, xh0 = rng.uniform(-1, 1, N), rng.uniform(-1, 1, N)
    tr = integrate(truncate(net, N), np.stack([x0, xh0], 1).ravel(), None, 2.0, 1e-3)
    x, xh = split_pairs(tr.states, 1, N)
    E = -2.0 * np.eye(N) + 0.2 * (np.eye(N, k=1) + np.eye(N, k=-1))
    from scipy.linalg import expm
    np.testing.assert_allclose(x[-1] - xh[-1], expm(2.0 * E) @ (x0 - xh0), atol=1e-9)


def test_exact_initialization_keeps_zero_error():
    os_ = luenberger()
    net = build_observer_composite(os_)
    x0 = np.random.default_rng(3).normal(size=8)
    tr = integrate(truncate(net, 8), np.stack([x0, x0], 1).ravel(), None, 1.0, 1e-2)
    an = analyze(net.gain)
    rep = observer_error_decay(tr, os_, an.certificate.M, an.certificate.a)
    assert rep["error_final"] == 0.0
    assert rep["verdict"] == "yes"


def test_unstable_observer_verdict_no():
    os_ = luenberger(K=0.0, gain=GainSpec(lam=ScalarSeq.const(1.0), gamma_u=ScalarSeq.const(0.0)))
    net = build_observer_composite(os_)
    rng = np.random.default_rng(4)
    z0 = np.stack([rng.normal(size=10), rng.normal(size=10)], 1).ravel()
    tr = integrate(truncate(net, 10), z0, None, 3.0, 1e-2)
    rep = observer_error_decay(tr, os_)
    assert rep["verdict"] == "no" and rep["fitted"]["a"] < 0


def test_observer_output_dimension_mismatch():
    os_ = luenberger()
    bad = ObserverSpec(os_.f, os_.h, os_.fhat, 1, 2, os_.gain)
    with pytest.raises(ValueError):
        build_observer_composite(bad)


def test_observer_alpha_sandwich_checked():
    g = GainSpec(lam=ScalarSeq.const(3.6), alpha_lo=ScalarSeq.const(2.0), alpha_hi=ScalarSeq.const(3.0))
    os_ = luenberger(gain=g)
    with pytest.raises(ValueError):
        build_observer_composite(os_)
