"""Truncated infinite networks: specification, right-hand side, RK4 integration."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import Env, Expr, Layout, uses_input, uses_time
from .gainop import GainSpec
from .rules import BlockDims, BlockRule
from .seqspace import SetDescriptor, SetSpec, TruncSeq, lp_norm_flat

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# local Lyapunov functions


@dataclass(frozen=True)
class QuadV:
    """``V(x) = x^T P x`` with ``P`` symmetric positive definite."""

    P: tuple

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if not np.allclose(P, P.T):
            raise ValueError("quadratic weight must be symmetric")
        if np.linalg.eigvalsh(P).min() <= 0:
            raise ValueError("quadratic weight must be positive definite")
        object.__setattr__(self, "P", tuple(map(tuple, P)))

    @classmethod
    def scalar(cls, w: float = 1.0, n: int = 1) -> "QuadV":
        return cls(tuple(map(tuple, w * np.eye(n))))

    def value(self, x: np.ndarray, A: SetDescriptor) -> np.ndarray:
        P = np.asarray(self.P)
        return np.einsum("...i,ij,...j->...", x, P, x)

    def alpha_bounds(self, n: int, p: float) -> tuple[float, float]:
        ev = np.linalg.eigvalsh(np.asarray(self.P))
        return float(ev.min()), float(ev.max())

    def to_dict(self):
        return {"kind": "quad", "P": [list(r) for r in self.P]}


@dataclass(frozen=True)
class DistPowV:
    """``V(x) = c |x|_{A_i}^power``."""

    c: float = 1.0
    power: float = 2.0

    def value(self, x, A: SetDescriptor):
        return self.c * A.dist(x) ** self.power

    def alpha_bounds(self, n: int, p: float) -> tuple[float, float]:
        if self.power != p:
            raise ValueError("distance power differs from the space exponent")
        return self.c, self.c

    def to_dict(self):
        return {"kind": "distpow", "c": self.c, "power": self.power}


LocalV = QuadV | DistPowV


@dataclass(frozen=True)
class SubsystemSpec:
    """One block: dynamics expression, sizes, local Lyapunov function, Lipschitz bound."""

    f: Expr
    n: int = 1
    m: int = 0
    V: LocalV = field(default_factory=QuadV.scalar)
    lipschitz: float = np.inf


@dataclass(frozen=True)
class NetworkSpec:
    subsystems: BlockRule
    gain: GainSpec
    sets: SetSpec
    p: float = 2.0
    q: float = 2.0
    time_varying: bool = False
    name: str = ""

    def __post_init__(self):
        if self.gain.p != self.p or self.gain.q != self.q:
            raise ValueError("gain data and network use different exponents")
        if not self.time_varying and any(uses_time(s.f) for s in self._all()):
            raise ValueError("dynamics read the time but the network is not marked time-varying")
        m = {s.m for s in self._all()}
        if len(m) > 1:
            raise ValueError("input blocks must share one dimension")

    def _all(self):
        return list(self.subsystems.prefix) + [self.subsystems.tail]

    @property
    def dims(self) -> BlockDims:
        r = self.subsystems
        return BlockDims(tuple(s.n for s in r.prefix), r.tail.n)

    @property
    def m(self) -> int:
        return self.subsystems.tail.m

    @property
    def udims(self) -> BlockDims | None:
        return BlockDims.uniform(self.m) if self.m else None

    def local(self, i: int) -> SubsystemSpec:
        return self.subsystems[i]


# --------------------------------------------------------------------------
# inputs


@dataclass(frozen=True)
class InputSignal:
    """External input on blocks ``0..support-1`` (zero elsewhere).

    ``kind`` is ``zero``, ``constant``, ``schedule`` (piecewise constant,
    switching at ``times``) or ``sinusoid`` (``amp sin(omega t + phase * i)``).
    """

    kind: str = "zero"
    m: int = 1
    support: int = 0
    values: tuple = ()  # per level: array (support, m)
    times: tuple[float, ...] = ()
    omega: float = 1.0
    phase: float = 0.0

    @classmethod
    def zero(cls, m: int = 1) -> "InputSignal":
        return cls("zero", m)

    @classmethod
    def constant(cls, value, support: int, m: int = 1) -> "InputSignal":
        v = np.broadcast_to(np.asarray(value, dtype=float), (support, m)).copy()
        return cls("constant", m, support, (v,))

    @classmethod
    def schedule(cls, times: Sequence[float], values: Sequence, support: int, m: int = 1) -> "InputSignal":
        if len(values) != len(times) + 1:
            raise ValueError("a schedule with k switch times needs k + 1 levels")
        if np.any(np.diff(times) <= 0):
            raise ValueError("switch times must increase")
        lv = tuple(np.broadcast_to(np.asarray(v, dtype=float), (support, m)).copy() for v in values)
        return cls("schedule", m, support, lv, tuple(float(t) for t in times))

    @classmethod
    def sinusoid(cls, amp, omega: float, phase: float, support: int, m: int = 1) -> "InputSignal":
        a = np.broadcast_to(np.asarray(amp, dtype=float), (support, m)).copy()
        return cls("sinusoid", m, support, (a,), (), float(omega), float(phase))

    def blocks_at(self, t: float) -> np.ndarray:
        if self.kind == "zero" or self.support == 0:
            return np.zeros((0, self.m))
        if self.kind == "constant":
            return self.values[0]
        if self.kind == "schedule":
            k = int(np.searchsorted(self.times, t, side="right"))
            return self.values[k]
        i = np.arange(self.support)[:, None]
        return self.values[0] * np.sin(self.omega * t + self.phase * i)

    def flat(self, t: float, N: int) -> np.ndarray:
        out = np.zeros(N * self.m)
        b = self.blocks_at(t)[:N]
        out[: b.size] = b.ravel()
        return out

    def sup_norm(self, q: float) -> float:
        """``|u|_{q, inf}``; exact except for sinusoids, where it is an upper bound."""
        if self.kind == "zero" or self.support == 0:
            return 0.0
        levels = self.values
        return float(max(
            (np.linalg.norm(v, axis=1) ** q).sum() ** (1.0 / q) for v in levels
        ))

    def to_dict(self):
        return {"kind": self.kind, "m": self.m, "support": self.support,
                "sup_norm_q2": self.sup_norm(2.0)}


# --------------------------------------------------------------------------
# truncation


class TruncatedSystem:
    """Finite ODE ``x' = F(t, x, u)`` on the first ``N`` blocks (neighbors beyond read 0)."""

    def __init__(self, net: NetworkSpec, N: int):
        if N < net.subsystems.prefix_len:
            raise ValueError(f"truncation N={N} shorter than the explicit prefix "
                             f"({net.subsystems.prefix_len} blocks)")
        self.net = net
        self.N = int(N)
        self.layout = Layout(net.dims, self.N, net.udims)
        self.dims = net.dims
        self._parts = []
        for sub, idx in net.subsystems.groups(self.N):
            fn, n = sub.f.compile(self.layout, idx)
            if n != sub.n:
                raise ValueError(f"dynamics of block {idx[0]} produce size {n}, state has {sub.n}")
            a, b = int(self.layout.starts[idx[0]]), int(self.layout.starts[idx[-1] + 1])
            self._parts.append((a, b, fn))
        self.reads_input = any(uses_input(s.f) for s in net._all())

    @property
    def D(self) -> int:
        return self.layout.D

    def rhs(self, t: float, x: np.ndarray, u: np.ndarray | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if u is None and self.layout.Du:
            u = np.zeros(x.shape[:-1] + (self.layout.Du,))
        env = Env(x, t, u)
        out = np.empty(x.shape)
        for a, b, fn in self._parts:
            out[..., a:b] = fn(env).reshape(x.shape[:-1] + (b - a,))
        return out

    def block_slice(self, i: int) -> slice:
        s = self.layout.starts
        return slice(int(s[i]), int(s[i + 1]))


def truncate(net: NetworkSpec, N: int) -> TruncatedSystem:
    return TruncatedSystem(net, N)


# --------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    dims: BlockDims
    N: int
    p: float
    dt: float
    input: InputSignal
    t0: float = 0.0
    max_defect: float = 0.0
    overflow: bool = False
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("time grid must be strictly increasing")

    @property
    def starts(self) -> np.ndarray:
        return self.dims.starts(self.N)

    def block(self, i: int) -> np.ndarray:
        s = self.starts
        return self.states[:, s[i]:s[i + 1]]

    def seq(self, k: int) -> TruncSeq:
        return TruncSeq(self.dims, self.N, self.states[k], self.p)

    def norms(self) -> np.ndarray:
        return lp_norm_flat(self.states, self.dims, self.N, self.p)

    def inputs(self) -> np.ndarray:
        return np.stack([self.input.flat(t, self.N) for t in self.times])

    def to_csv(self, path, stride: int = 1) -> None:
        """Long format with header ``t,block,coord,value``."""
        s = self.starts
        sizes = np.diff(s)
        blk = np.repeat(np.arange(self.N), sizes)
        crd = np.concatenate([np.arange(n) for n in sizes]) if self.N else np.zeros(0, int)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "block", "coord", "value"])
            for k in range(0, self.times.shape[0], stride):
                t = repr(float(self.times[k]))
                w.writerows(zip([t] * blk.size, blk.tolist(), crd.tolist(),
                                map(repr, self.states[k].tolist())))

    def to_npz(self, path) -> None:
        np.savez_compressed(
            path, times=self.times, states=self.states, starts=self.starts,
            p=self.p, dt=self.dt, overflow=self.overflow, max_defect=self.max_defect,
        )

    def diagnostics(self) -> dict:
        return {"max_defect": self.max_defect, "overflow": self.overflow,
                "samples": int(self.times.shape[0]), "warnings": list(self.warnings)}


def _rk4_step(sys: TruncatedSystem, t, x, h, u_of):
    k1 = sys.rhs(t, x, u_of(t))
    k2 = sys.rhs(t + 0.5 * h, x + 0.5 * h * k1, u_of(t + 0.5 * h))
    k3 = sys.rhs(t + 0.5 * h, x + 0.5 * h * k2, u_of(t + 0.5 * h))
    k4 = sys.rhs(t + h, x + h * k3, u_of(t + h))
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(sys: TruncatedSystem, x0, u: InputSignal | None, T: float, dt: float = 1e-3,
              t0: float = 0.0, record_every: int = 1, defect_every: int = 50,
              defect_bound: float = 1e-6, overflow: float = 1e100) -> Trajectory:
    """Classical fixed-step RK4 on ``[t0, t0 + T]``.

    Every ``defect_every`` steps the step is repeated as two half steps; the
    difference estimates the local error. Non-finite or huge states stop the
    run and set the overflow flag.
    """
    if dt <= 0 or T <= 0:
        raise ValueError("dt and T must be positive")
    x = np.asarray(x0.data if isinstance(x0, TruncSeq) else x0, dtype=float).copy()
    if x.shape != (sys.D,):
        raise ValueError(f"initial state has {x.shape[0]} entries, system has {sys.D}")
    u = u or InputSignal.zero(max(sys.net.m, 1))
    N = sys.N
    if sys.layout.Du:
        u_of = lambda t: u.flat(t, N)
    else:
        u_of = lambda t: None
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be an integer multiple of dt")
    nrec = steps // record_every + 1
    times = np.empty(nrec)
    states = np.empty((nrec, sys.D))
    times[0], states[0] = t0, x
    max_defect = 0.0
    warnings: list = []
    over = False
    rec = 1
    t = t0
    for k in range(1, steps + 1):
        if defect_every and (k - 1) % defect_every == 0:
            full = _rk4_step(sys, t, x, dt, u_of)
            half = _rk4_step(sys, t, x, 0.5 * dt, u_of)
            half = _rk4_step(sys, t + 0.5 * dt, half, 0.5 * dt, u_of)
            d = float(np.max(np.abs(full - half), initial=0.0))
            if d > max_defect:
                max_defect = d
            if d > defect_bound and len(warnings) < 20:
                warnings.append({"t": t, "defect": d})
            x = full
        else:
            x = _rk4_step(sys, t, x, dt, u_of)
        t = t0 + k * dt
        if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > overflow:
            over = True
            log.warning("state left the finite range at t=%.4g; record truncated", t)
            break
        if k % record_every == 0:
            times[rec], states[rec] = t, x
            rec += 1
    return Trajectory(times[:rec].copy(), states[:rec].copy(), sys.dims, N, sys.net.p, dt, u,
                      t0, max_defect, over, warnings)


# --------------------------------------------------------------------------
# diagnostics


def truncation_probe(net: NetworkSpec, N: int, factor: int, x0: TruncSeq, u: InputSignal | None,
                     T: float, dt: float = 1e-3) -> dict:
    """Sup over time of the distance between the ``N`` and ``factor * N`` runs on blocks ``< N``."""
    if x0.N > N:
        raise ValueError("initial data must be supported within the first N blocks")
    small = integrate(truncate(net, N), x0.extend(N), u, T, dt)
    big = integrate(truncate(net, factor * N), x0.extend(factor * N), u, T, dt)
    D = small.states.shape[1]
    diff = small.states - big.states[:, :D]
    dist = lp_norm_flat(diff, net.dims, N, net.p)
    k = int(np.argmax(dist))
    return {"N": N, "factor": factor, "sup": float(dist[k]), "argmax_t": float(small.times[k]),
            "series": dist}


def lipschitz_check(net: NetworkSpec, i: int, N: int | None = None, pairs: int = 1000,
                    scale: float = 1.0, seed: int = 0, T: float = 10.0) -> dict:
    """Largest sampled ``|f_i(x) - f_i(y)| / |x - y|`` against the declared bound."""
    sub = net.local(i)
    N = N or max(i + 8, net.subsystems.prefix_len + 1)
    sys = truncate(net, N)
    rng = np.random.default_rng(seed)
    X = scale * rng.standard_normal((pairs, sys.D))
    Y = X + scale * rng.standard_normal((pairs, sys.D)) * rng.uniform(1e-3, 1.0, (pairs, 1))
    ts = rng.uniform(0.0, T, pairs)
    sl = sys.block_slice(i)
    worst = 0.0
    for t in np.unique(ts) if net.time_varying else [0.0]:
        m = ts == t if net.time_varying else np.ones(pairs, bool)
        fx = sys.rhs(t, X[m])[:, sl]
        fy = sys.rhs(t, Y[m])[:, sl]
        r = np.linalg.norm(fx - fy, axis=1) / np.linalg.norm(X[m] - Y[m], axis=1)
        worst = max(worst, float(r.max()))
    return {"block": i, "declared": sub.lipschitz, "sampled": worst,
            "ok": bool(worst <= sub.lipschitz + 1e-9)}


def zero_equilibrium_check(sys: TruncatedSystem, ts: Sequence[float] = (0.0, 1.0, 2.5, 7.0)) -> float:
    """``max |F(t, 0, 0)|`` over the sampled times."""
    z = np.zeros(sys.D)
    return float(max(np.max(np.abs(sys.rhs(t, z)), initial=0.0) for t in ts))
