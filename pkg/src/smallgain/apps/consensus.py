"""Weighted-average consensus tracked through weighted error coordinates.

Agent ``i >= 1`` runs ``x_i' = f(x_i) + B u_i`` with the diffusive input
``u_i = -sigma sum_j alpha_j a_ij (x_i - x_j)``. The error network has the
weighted average ``x_a`` as block 0 and ``e_i = alpha_i (x_i - x_a)`` as
block ``i``; it lives in ``l^1``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..certify import MarginSeries, fit_decay
from ..expr import Aggregate, Expr, Lin, Scale, State, Sum, substitute, walk
from ..gainop import BandedKernel, GainSpec
from ..netsim import DistPowV, NetworkSpec, SubsystemSpec
from ..rules import BlockRule, ScalarSeq
from ..seqspace import Full, Origin, SetSpec


@dataclass(frozen=True)
class ConsensusSpec:
    """Agent data.

    Parameters
    ----------
    f : Expr
        Agent dynamics written in the agent's own context (reads ``State()``).
    alpha : ScalarSeq
        Weights of agents ``1, 2, ...`` (index 0 is agent 1); explicit prefix
        then a geometric tail, summing to one.
    bandwidth, weight : int, float
        ``a_ij = weight`` for ``0 < |i - j| <= bandwidth``.
    decay : float
        Declared local decay rate of ``|e_i|`` under the uncoupled dynamics.
    """

    f: Expr
    alpha: ScalarSeq
    sigma: float
    n: int = 1
    B: tuple = ((1.0,),)
    bandwidth: int = 1
    weight: float = 1.0
    decay: float = 1.0
    lipschitz: float = 1.0
    explicit: int = 64

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.shape != (self.n, self.n):
            raise ValueError(f"B must be {self.n}x{self.n}, got {B.shape}")
        object.__setattr__(self, "B", tuple(map(tuple, B)))
        a = self.alpha
        if not a.geometric:
            raise ValueError("agent weights need a geometric tail with ratio in (0, 1)")
        if a.offset or a.tail <= 0 or any(v <= 0 for v in a.prefix):
            raise ValueError("agent weights must be positive")
        if abs(a.total() - 1.0) > 1e-12:
            raise ValueError(f"agent weights sum to {a.total():.16g}, not 1")
        if self.weight != 1.0:
            raise ValueError("coupling weights must be normalized so their supremum is 1")
        if not (isinstance(self.bandwidth, (int, np.integer)) and self.bandwidth >= 1):
            raise ValueError("neighbourhoods must be finite: bandwidth is a positive integer")
        if self.sigma < 0 or self.decay <= 0:
            raise ValueError("need sigma >= 0 and a positive decay rate")
        for node in walk(self.f):
            if isinstance(node, State) and (node.offset != 0 or node.absolute is not None):
                raise ValueError("agent dynamics may only read the agent's own state")

    @property
    def block_alpha(self) -> ScalarSeq:
        """Weights on error-network blocks: 0 at block 0, ``alpha_i`` at block ``i``."""
        a = self.alpha
        return ScalarSeq((0.0,) + a.prefix, a.tail, a.ratio)

    def alpha_min(self, N: int) -> float:
        return float(np.min(self.alpha.at(np.arange(N))))

    @property
    def Bnorm(self) -> float:
        return float(np.linalg.norm(np.asarray(self.B), 2))


def _agent_at(f: Expr, alpha_inv) -> Expr:
    # f(alpha_i^{-1} e_i + x_a) written in block i's context
    def sub(e):
        if isinstance(e, State):
            return Sum((Scale(alpha_inv, State(sl=e.sl)), State(absolute=0, sl=e.sl)))
        return None
    return substitute(f, sub)


def _offsets(cs: ConsensusSpec):
    return [k for k in range(-cs.bandwidth, cs.bandwidth + 1) if k]


def _coupling(cs: ConsensusSpec, a: ScalarSeq) -> Expr:
    # B sum_k a_ik (alpha_{i+k} e_i - alpha_i e_{i+k}); edges leaving [1, N) are dropped
    terms = []
    for k in _offsets(cs):
        terms.append(Scale(cs.weight, Scale(a.shift(k), State(), guard=k, guard_lo=1)))
        terms.append(Scale(-cs.weight, Scale(a, State(k, lo=1), guard=k, guard_lo=1)))
    return Lin(cs.B, Sum(tuple(terms)))


def _error_gain(cs: ConsensusSpec) -> GainSpec:
    a = cs.block_alpha
    P = cs.explicit + 1
    g = cs.sigma * cs.weight * cs.Bnorm
    entries = []
    for i in range(1, P):
        for k in _offsets(cs):
            j = i + k
            if j >= 1:
                entries.append((i, j, g * a.at(i)))
    kern = BandedKernel(tuple((k, g * a.sup(P)) for k in _offsets(cs)))
    lam = ScalarSeq((1.0,), cs.decay)
    return GainSpec(lam=lam, entries=tuple(entries), P=P, kernel=kern, gamma_u=ScalarSeq.const(0.0),
                    p=1.0, q=1.0, col_lo=1, null_blocks=frozenset({0}))


def build_consensus_error_system(cs: ConsensusSpec) -> NetworkSpec:
    """Average block 0 plus error blocks ``e_i``, with ``p = 1``.

    On a truncation the average is normalized by the retained weight
    ``sum_{i<=N} alpha_i`` and edges leaving the truncation are dropped.
    """
    a = cs.block_alpha
    ainv = a.reciprocal()
    fa = _agent_at(cs.f, ainv)
    avg = Aggregate(a, fa, start=1, normalize=True)
    err = Sum((Scale(a, fa), Scale(-cs.sigma, _coupling(cs, a)), Scale(-1.0, Scale(a, avg))))
    n = cs.n
    Lf = cs.lipschitz
    subs = BlockRule((SubsystemSpec(avg, n, 0, DistPowV(1.0, 1.0), Lf),),
                     SubsystemSpec(err, n, 0, DistPowV(1.0, 1.0), np.inf))
    sets = SetSpec.make((Full(),), Origin())
    return NetworkSpec(subs, _error_gain(cs), sets, 1.0, 1.0, False, "consensus-error")


def build_original_system(cs: ConsensusSpec) -> NetworkSpec:
    """Agents in their own coordinates, block ``b`` holding agent ``b + 1``.

    Only meant for simulation: the gain data is a placeholder with no
    coupling and unit decay.
    """
    w = cs.alpha
    terms = []
    for k in _offsets(cs):
        diff = Sum((State(), Scale(-1.0, State(k))))
        terms.append(Scale(cs.weight, Scale(w.shift(k), diff, guard=k)))
    f = Sum((cs.f, Scale(-cs.sigma, Lin(cs.B, Sum(tuple(terms))))))
    gain = GainSpec(lam=ScalarSeq.const(1.0), gamma_u=ScalarSeq.const(0.0), p=1.0, q=1.0)
    subs = BlockRule((), SubsystemSpec(f, cs.n, 0, DistPowV(1.0, 1.0), np.inf))
    return NetworkSpec(subs, gain, SetSpec.make((), Origin()), 1.0, 1.0, False, "consensus-agents")


def weighted_average(cs: ConsensusSpec, x: np.ndarray, N: int) -> np.ndarray:
    """``sum_{i<=N} alpha_i x_i / sum_{i<=N} alpha_i`` for flat agent states of shape (..., N*n)."""
    w = cs.alpha.at(np.arange(N))
    xb = np.asarray(x, dtype=float).reshape(x.shape[:-1] + (N, cs.n))
    return np.einsum("i,...ij->...j", w, xb) / w.sum()


def to_error_coordinates(cs: ConsensusSpec, x: np.ndarray, N: int) -> np.ndarray:
    """Agent states (..., N*n) to error-network states (..., (N+1)*n)."""
    x = np.asarray(x, dtype=float)
    xa = weighted_average(cs, x, N)
    w = cs.alpha.at(np.arange(N))
    xb = x.reshape(x.shape[:-1] + (N, cs.n))
    e = w[:, None] * (xb - xa[..., None, :])
    return np.concatenate([xa, e.reshape(x.shape[:-1] + (N * cs.n,))], axis=-1)


def _mode_errors(cs: ConsensusSpec, traj):
    Na = traj.N - 1
    n = cs.n
    e = traj.states[:, n:n * (Na + 1)].reshape(-1, Na, n)
    en = np.linalg.norm(e, axis=-1)
    alpha = cs.alpha.at(np.arange(Na))
    return en, en / alpha, alpha


def consensus_metrics(traj, cs: ConsensusSpec, M: float, a: float, modes: int | None = None,
                      tol: float = 1e-9) -> dict:
    """Error envelope, partial-sum table and per-mode table with their margins.

    Table margins are compared with ``tol`` relative to the bound they
    belong to, since the per-mode bounds grow like ``1 / alpha_i``.
    """
    en, d, alpha = _mode_errors(cs, traj)
    Na = d.shape[1]
    modes = Na if modes is None else min(modes, Na)
    s = traj.times - traj.t0
    e1 = en.sum(axis=1)
    decay = M * np.exp(-a * s) * e1[0]
    env = MarginSeries("error_l1_envelope", traj.times, decay - e1, tol * max(1.0, decay[0]))
    csum = np.cumsum(d[:, :modes], axis=1)
    amin = np.minimum.accumulate(alpha[:modes])
    sum_bounds = decay[:, None] / amin
    sum_margin = (sum_bounds - csum).min(axis=0)
    mode_bounds = decay[:, None] / alpha[:modes]
    mode_margin = (mode_bounds - d[:, :modes]).min(axis=0)
    scale_s = tol * np.maximum(1.0, sum_bounds.max(axis=0))
    scale_m = tol * np.maximum(1.0, mode_bounds.max(axis=0))
    fitted = {"M": 0.0, "a": float("inf"), "residual": 0.0}
    pos = e1 > 1e-13 * max(e1[0], 1e-300)
    if e1[0] > 0 and pos.sum() > 1:
        Mf, af, r = fit_decay(s[pos], e1[pos])
        fitted = {"M": Mf, "a": af, "residual": r}
    sums_ok = bool(np.all(sum_margin >= -scale_s))
    modes_ok = bool(np.all(mode_margin >= -scale_m))
    return {
        "M": M, "a": a,
        "envelope": env.summary(),
        "fitted": fitted,
        "partial_sums": [{"N": k + 1, "alpha_min": float(amin[k]), "min_margin": float(sum_margin[k])}
                         for k in range(modes)],
        "modes": [{"mode": k + 1, "alpha": float(alpha[k]), "min_margin": float(mode_margin[k])}
                  for k in range(modes)],
        "partial_sums_passed": sums_ok,
        "modes_passed": modes_ok,
        "passed": bool(env.passed and sums_ok and modes_ok),
    }


def average_drift(cs: ConsensusSpec, traj_agents) -> float:
    """Largest deviation of the weighted average from its initial value."""
    xa = weighted_average(cs, traj_agents.states, traj_agents.N)
    return float(np.max(np.abs(xa - xa[0])))


def write_consensus_csv(path, traj, cs: ConsensusSpec, modes: int | None = None, stride: int = 1) -> None:
    """Long format with header ``t,e_l1,mode,mode_err`` where ``mode_err = |x_i - x_a|``."""
    en, d, _ = _mode_errors(cs, traj)
    modes = d.shape[1] if modes is None else min(modes, d.shape[1])
    e1 = en.sum(axis=1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "e_l1", "mode", "mode_err"])
        for k in range(0, traj.times.shape[0], stride):
            t, e = repr(float(traj.times[k])), repr(float(e1[k]))
            for i in range(modes):
                w.writerow([t, e, i + 1, repr(float(d[k, i]))])
