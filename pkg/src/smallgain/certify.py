"""Numerical checks of Lyapunov and trajectory inequalities along simulations."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gainop import Certificate, GainOperator
from .netsim import NetworkSpec, Trajectory
from .seqspace import SetSpec, TruncSeq, set_dist_flat


@dataclass
class MarginSeries:
    """Per-sample slack ``bound - observed`` of one inequality."""

    name: str
    t: np.ndarray
    margin: np.ndarray
    tol: float
    flagged: int = 0

    @property
    def min(self) -> float:
        return float(self.margin.min(initial=np.inf))

    @property
    def argmin_t(self) -> float:
        return float(self.t[int(np.argmin(self.margin))]) if self.margin.size else float("nan")

    @property
    def passed(self) -> bool:
        return bool(self.min >= -self.tol)

    def summary(self) -> dict:
        return {
            "min": self.min,
            "argmin_t": self.argmin_t,
            "mean": float(self.margin.mean()) if self.margin.size else float("nan"),
            "tol": float(self.tol),
            "passed": self.passed,
            "flagged": self.flagged,
        }


# --------------------------------------------------------------------------
# Lyapunov functions on stored states


def _partition(N: int, *rules) -> list[np.ndarray]:
    P = min(N, max(r.prefix_len for r in rules))
    parts = [np.array([i]) for i in range(P)]
    if N > P:
        parts.append(np.arange(P, N))
    return parts


def local_values(net: NetworkSpec, states: np.ndarray, N: int) -> np.ndarray:
    """``V_i(x_i)`` for ``i < N`` along leading axes of flat states."""
    states = np.asarray(states, dtype=float)
    dims = net.dims
    starts = dims.starts(N)
    out = np.empty(states.shape[:-1] + (N,))
    for idx in _partition(N, net.subsystems, net.sets.rule):
        i0 = int(idx[0])
        n = dims[i0]
        seg = states[..., starts[i0]:starts[idx[-1] + 1]].reshape(states.shape[:-1] + (idx.size, n))
        out[..., idx] = net.local(i0).V.value(seg, net.sets[i0])
    return out


def composite_V(cert: Certificate, net: NetworkSpec, x) -> np.ndarray | float:
    """``V(x) = sum_i mu_i V_i(x_i)`` over the explicit blocks."""
    if isinstance(x, TruncSeq):
        v = local_values(net, x.data, x.N)
        return float(v @ cert.mu.at(np.arange(x.N)))
    x = np.asarray(x, dtype=float)
    N = _blocks_in(net, x.shape[-1])
    return local_values(net, x, N) @ cert.mu.at(np.arange(N))


def _blocks_in(net: NetworkSpec, D: int) -> int:
    dims = net.dims
    N, tot = 0, 0
    while tot < D:
        tot += dims[N]
        N += 1
    if tot != D:
        raise ValueError("flat length does not match whole blocks")
    return N


# --------------------------------------------------------------------------
# Dini derivatives


def forward_difference(t: np.ndarray, v: np.ndarray, rel: float = 10.0):
    """``D_h v(t_k)`` for ``k < S - 1`` with a step-doubling consistency probe.

    Returns ``(D_h, default_tol, flagged)``; the default tolerance is
    ``10 max|v''| h`` from second differences, and a sample is flagged when
    ``D_h`` and ``D_{2h}`` differ by more than ``rel`` times the predicted
    ``h |v''| / 2``.
    """
    h = np.diff(t)
    d1 = np.diff(v) / h
    if v.shape[0] < 3:
        return d1, 0.0, 0
    h0 = float(h[0])
    vpp = np.diff(v, 2) / h0 ** 2
    tol = 10.0 * float(np.abs(vpp).max(initial=0.0)) * h0
    d2 = (v[2:] - v[:-2]) / (2.0 * h0)
    pred = 0.5 * h0 * np.abs(vpp)
    flagged = int(np.sum(np.abs(d1[:-1] - d2) > rel * pred + 1e-12 * (1 + np.abs(d1[:-1]))))
    return d1, tol, flagged


def check_local_dissipation(net: NetworkSpec, traj: Trajectory, i: int, tol: float | None = None) -> MarginSeries:
    """``D+ V_i <= -lambda_i V_i + sum_j gamma_ij V_j + gamma_iu |u_i|^q`` along the run."""
    N = traj.N
    V = local_values(net, traj.states, N)
    Vi = V[:, i]
    if not np.all(np.isfinite(Vi)):
        raise ValueError("local Lyapunov function is not finite along the trajectory")
    g = net.gain
    op = GainOperator(g)
    row = np.asarray(op.gamma_block(i + 1, N).toarray())[i]
    bound = -g.lam.at(i) * Vi + V @ row
    if traj.input.kind != "zero":
        U = traj.inputs()
        m = traj.input.m
        ui = np.linalg.norm(U[:, i * m:(i + 1) * m], axis=1)
        bound = bound + g.gamma_u.at(i) * ui ** g.q
    d, dtol, flagged = forward_difference(traj.times, Vi)
    tol = dtol if tol is None else tol
    return MarginSeries(f"local_{i}", traj.times[:-1], bound[:-1] - d, tol, flagged)


def check_composite_dissipation(cert: Certificate, net: NetworkSpec, traj: Trajectory,
                                tol: float | None = None) -> MarginSeries:
    """``D+ V <= -lambda_inf V + mu_hi gamma_u_hi |u|_{q,inf}^q`` along the run."""
    V = composite_V(cert, net, traj.states)
    if not np.all(np.isfinite(V)):
        raise ValueError("composite function is not finite along the trajectory")
    unorm = traj.input.sup_norm(cert.q)
    bound = -cert.lambda_inf * V + cert.input_gain * unorm ** cert.q
    d, dtol, flagged = forward_difference(traj.times, V)
    tol = dtol if tol is None else tol
    return MarginSeries("composite_dissipation", traj.times[:-1], bound[:-1] - d, tol, flagged)


def check_coercivity(cert: Certificate, net: NetworkSpec, traj: Trajectory, rtol: float = 1e-12) -> MarginSeries:
    """Both sides of ``mu_lo alpha_lo d^p <= V <= mu_hi alpha_hi d^p``; the margin is the smaller slack."""
    V = composite_V(cert, net, traj.states)
    d = set_dist_flat(traj.states, net.dims, traj.N, net.sets, net.p) ** net.p
    lo, hi = cert.coercivity
    m = np.minimum(V - lo * d, hi * d - V)
    return MarginSeries("coercivity", traj.times, m, rtol * (1.0 + float(np.abs(V).max(initial=0.0))))


def check_monotone_comparison(cert: Certificate, net: NetworkSpec, traj: Trajectory, rtol: float = 1e-6) -> MarginSeries:
    """For zero input, ``V(t) exp(lambda_inf t)`` must not increase between samples."""
    V = composite_V(cert, net, traj.states)
    w = V * np.exp(cert.lambda_inf * (traj.times - traj.t0))
    return MarginSeries("monotone_comparison", traj.times[1:], -np.diff(w), rtol * float(np.abs(w).max(initial=1.0)))


# --------------------------------------------------------------------------
# envelopes


def fit_decay(t, v, window: tuple[float, float] | None = None) -> tuple[float, float, float]:
    """Least-squares fit ``v(t) ~ M v(t_0) exp(-a (t - t_0))``.

    Returns ``(M, a, residual)`` with ``M`` the overshoot relative to the
    first sample in the window and ``residual`` the RMS error in ``log v``.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if window is not None:
        m = (t >= window[0]) & (t <= window[1])
        t, v = t[m], v[m]
    if t.size < 2:
        raise ValueError("need at least two samples to fit a decay")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValueError("decay fit needs strictly positive finite samples")
    y = np.log(v)
    A = np.column_stack([np.ones_like(t), t - t[0]])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(np.exp(coef[0] - y[0])), float(-coef[1]), res


@dataclass
class EnvelopeReport:
    checks: dict = field(default_factory=dict)
    fitted: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def add(self, series: MarginSeries) -> None:
        self.checks[series.name] = series

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": {k: v.summary() for k, v in sorted(self.checks.items())},
            "fitted": self.fitted,
            **self.extra,
        }

    def margins_csv(self, path, stride: int = 1) -> None:
        write_margins_csv(path, self.checks.values(), stride)


def write_margins_csv(path, series, stride: int = 1) -> None:
    """Long format with header ``t,check,margin``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "check", "margin"])
        for s in series:
            for k in range(0, s.t.shape[0], stride):
                w.writerow([repr(float(s.t[k])), s.name, repr(float(s.margin[k]))])


def _fit_positive(t, d, floor: float = 1e-13):
    m = d > floor * max(float(d.max(initial=0.0)), 1e-300)
    if m.sum() < 2 or d.max(initial=0.0) <= 0:
        return {"M": 0.0, "a": float("inf"), "residual": 0.0}
    M, a, r = fit_decay(t[m], d[m])
    return {"M": M, "a": a, "residual": r}


def check_eiss_envelope(traj: Trajectory, A: SetSpec, M: float, a: float,
                        gamma_fn: Callable | None = None, tol: float = 1e-6, q: float = 2.0) -> EnvelopeReport:
    """``|phi(t)|_A <= M exp(-a t) |x0|_A + gamma(|u|_{q,inf}) + tol`` at every sample."""
    d = set_dist_flat(traj.states, traj.dims, traj.N, A, traj.p)
    s = traj.times - traj.t0
    unorm = traj.input.sup_norm(q)
    g = float(gamma_fn(unorm)) if (gamma_fn is not None and unorm > 0) else 0.0
    bound = M * np.exp(-a * s) * d[0] + g
    rep = EnvelopeReport()
    rep.add(MarginSeries("eiss_envelope", traj.times, bound - d, tol))
    if unorm == 0.0:
        rep.fitted = _fit_positive(s, d)
    tail = d[int(0.9 * (d.shape[0] - 1)):]
    rep.extra = {"M": M, "a": a, "gain_term": g, "input_norm": unorm,
                 "ultimate": float(tail.max(initial=0.0)), "distance_final": float(d[-1])}
    return rep


def practical_iss_offset(traj: Trajectory, A: SetSpec, M: float, a: float,
                         gamma_fn: Callable | None = None, tol: float = 1e-6, q: float = 2.0) -> EnvelopeReport:
    """Norm envelope with the offset ``(1 + M exp(-a t)) ||A||`` for bounded ``A``."""
    R = A.radius(traj.dims, traj.p)
    if not np.isfinite(R):
        raise ValueError("target set is unbounded; the practical offset is infinite")
    x = traj.norms()
    s = traj.times - traj.t0
    unorm = traj.input.sup_norm(q)
    g = float(gamma_fn(unorm)) if (gamma_fn is not None and unorm > 0) else 0.0
    decay = M * np.exp(-a * s)
    bound = decay * x[0] + g + (1.0 + decay) * R
    rep = EnvelopeReport()
    rep.add(MarginSeries("practical_iss", traj.times, bound - x, tol))
    rep.extra = {"set_radius": R, "M": M, "a": a}
    return rep


def dumps(report: dict) -> str:
    """Deterministic JSON text (sorted keys, finite numbers rendered as strings when needed)."""
    return json.dumps(_clean(report), sort_keys=True, indent=2)


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v
