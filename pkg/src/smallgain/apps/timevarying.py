"""Time-varying networks through a clock block ``y' = 1`` prepended as block 0."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..certify import MarginSeries, fit_decay
from ..expr import Const
from ..gainop import GainSpec
from ..netsim import DistPowV, InputSignal, NetworkSpec, SubsystemSpec, integrate, truncate
from ..rules import BlockRule, ScalarSeq
from ..seqspace import Full, SetSpec, lp_norm_flat


@dataclass(frozen=True)
class ClockAugmented:
    base: NetworkSpec
    augmented: NetworkSpec
    lam0: float


def _prepend(seq: ScalarSeq, v0: float, upto: int) -> ScalarSeq:
    if seq.geometric:
        return ScalarSeq((v0,) + tuple(seq.prefix), seq.tail, seq.ratio, seq.offset)
    return ScalarSeq((v0,) + tuple(seq.at(np.arange(upto))), seq.tail)


def _augment_gain(g: GainSpec, lam0: float) -> GainSpec:
    P = g.boundary
    return GainSpec(
        lam=_prepend(g.lam, lam0, P),
        entries=tuple((i + 1, j + 1, v) for i, j, v in g.entries),
        P=g.P + 1,
        kernel=g.kernel,
        gamma_u=g.gamma_u.shift(-1),
        alpha_lo=g.alpha_lo.shift(-1),
        alpha_hi=g.alpha_hi.shift(-1),
        p=g.p,
        q=g.q,
        col_lo=g.col_lo + 1,
        null_blocks=frozenset({0} | {i + 1 for i in g.null_blocks}),
    )


def clock_augment(tv: NetworkSpec, lam0: float = 1.0) -> ClockAugmented:
    """Time-invariant network on blocks ``(y, z_1, z_2, ...)`` with target ``R x {0}``.

    The clock carries ``V_0 = 0`` and no gains in either direction, so its
    decay constant ``lam0`` never enters the dissipation rate.
    """
    if not tv.time_varying:
        raise ValueError("clock augmentation needs a network marked time-varying")
    if lam0 <= 0:
        raise ValueError("clock decay constant must be positive")
    clock = SubsystemSpec(Const((1.0,)), n=1, m=tv.m, V=DistPowV(1.0, tv.p), lipschitz=0.0)
    aug = lambda s: SubsystemSpec(s.f.augment(1, clock=0), s.n, s.m, s.V, s.lipschitz)
    r = tv.subsystems
    subs = BlockRule((clock,) + tuple(aug(s) for s in r.prefix), aug(r.tail))
    sets = SetSpec.make((Full(),) + tuple(tv.sets.rule.prefix), tv.sets.rule.tail)
    net = NetworkSpec(subs, _augment_gain(tv.gain, lam0), sets, tv.p, tv.q, False, tv.name + "+clock")
    return ClockAugmented(tv, net, lam0)


def simulate_from(aug: ClockAugmented, t0: float, z0, u: InputSignal | None, T: float, dt: float, N: int):
    """Augmented run from ``(t0, z0)``; ``N`` counts base blocks."""
    sys = truncate(aug.augmented, N + 1)
    x0 = np.concatenate([[t0], np.asarray(z0, dtype=float)])
    return integrate(sys, x0, u, T, dt)


def ueiss_check(aug: ClockAugmented, M: float, a: float, t0_samples, x0_samples, u: InputSignal | None,
                T: float, dt: float = 1e-3, N: int | None = None, tol: float = 1e-6) -> dict:
    """One ``(M, a)`` envelope for ``|z(t)|_p`` over every initial time and state.

    Each run is also fitted separately; the common envelope reported is the
    slowest fitted rate with the overshoot needed to cover all runs at it.
    The per-run margin series are returned under ``series``.
    """
    base = aug.base
    N = N or len(np.asarray(x0_samples[0]))
    dims = base.dims
    runs, series = [], []
    for t0 in t0_samples:
        for k, z0 in enumerate(x0_samples):
            tr = simulate_from(aug, float(t0), z0, u, T, dt, N)
            if tr.overflow:
                runs.append({"t0": float(t0), "x0": k, "overflow": True, "passed": False,
                             "min_margin": float("-inf"), "a_fit": float("-inf"), "M_fit": float("inf")})
                continue
            z = tr.states[:, 1:]
            nz = lp_norm_flat(z, dims, N, base.p)
            s = tr.times - tr.times[0]
            margin = M * np.exp(-a * s) * nz[0] - nz
            clock_err = float(np.max(np.abs(tr.states[:, 0] - (t0 + s))))
            series.append(MarginSeries(f"ueiss_t0={float(t0):g}_x0={k}", tr.times, margin, tol))
            pos = nz > 1e-12 * nz[0]
            Mf, af, _ = fit_decay(s[pos], nz[pos]) if nz[0] > 0 and pos.sum() > 1 else (0.0, np.inf, 0.0)
            runs.append({"t0": float(t0), "x0": k, "overflow": False, "min_margin": float(margin.min()),
                         "passed": bool(margin.min() >= -tol), "a_fit": af, "M_fit": Mf,
                         "clock_error": clock_err, "s": s, "norm": nz})
    finite = [r for r in runs if not r["overflow"] and np.isfinite(r["a_fit"])]
    a_common = min((r["a_fit"] for r in finite), default=float("nan"))
    M_common = float("nan")
    if finite and np.isfinite(a_common):
        M_common = max(float(np.max(r["norm"] * np.exp(a_common * r["s"]) / r["norm"][0])) for r in finite)
    for r in runs:
        r.pop("s", None)
        r.pop("norm", None)
    return {
        "M": M, "a": a, "passed": all(r["passed"] for r in runs), "runs": runs,
        "common_fit": {"a": a_common, "M": M_common},
        "unstable": bool(finite and a_common < 0),
        "series": series,
    }
