"""Distributed observers checked on the composite plant/observer network."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..certify import MarginSeries, fit_decay
from ..expr import Concat, Expr, Layout, Output, State, substitute
from ..gainop import GainSpec
from ..netsim import DistPowV, NetworkSpec, SubsystemSpec
from ..rules import BlockDims, BlockRule
from ..seqspace import Diagonal, SetSpec, lp_norm_flat, pair_dist_to_diagonal_flat


@dataclass(frozen=True)
class ObserverSpec:
    """Plant ``x_i' = f(x)``, output ``y_i = h(x)`` and observer ``xh_i' = fhat(xh, y)``.

    ``f`` and ``h`` read plant states through ``State``; ``fhat`` reads observer
    states through ``State`` and outputs through ``Output(k)``. ``gain`` holds
    the local data for ``V_i = w |x_i - xh_i|^p`` with ``alpha`` bounds
    expressed against ``|x_i - xh_i|^p``.
    """

    f: Expr
    h: Expr
    fhat: Expr
    n: int
    ny: int
    gain: GainSpec
    w: float = 1.0

    def __post_init__(self):
        if self.w <= 0:
            raise ValueError("Lyapunov weight must be positive")


def _slice(e: Expr, lo: int, n: int) -> Expr:
    def sub(node):
        if isinstance(node, State):
            a, b = node.sl if node.sl is not None else (0, n)
            return State(node.offset, node.absolute, node.lo, (lo + a, lo + b))
        return None
    return substitute(e, sub)


def _check_output(h: Expr, ny: int, n: int) -> None:
    lay = Layout(BlockDims.uniform(n), 3, None)
    _, k = h.compile(lay, np.arange(3))
    if k != ny:
        raise ValueError(f"output map gives {k} values but the observer expects {ny}")


def _sandwich(os: ObserverSpec, rng, pairs: int = 200) -> None:
    g = os.gain
    x = rng.standard_normal((pairs, os.n))
    y = rng.standard_normal((pairs, os.n))
    d = np.linalg.norm(x - y, axis=1) ** g.p
    V = os.w * d
    idx = rng.integers(0, max(g.boundary, 1) + 4, size=pairs)
    lo, hi = g.alpha_lo.at(idx), g.alpha_hi.at(idx)
    if np.any(V < lo * d * (1 - 1e-12)) or np.any(V > hi * d * (1 + 1e-12)):
        raise ValueError("declared alpha bounds do not sandwich V_i = w |x_i - xh_i|^p")


def build_observer_composite(os: ObserverSpec, seed: int = 0) -> NetworkSpec:
    """Paired blocks ``(x_i, xh_i)`` of size ``2n`` with the diagonal as target set.

    Since ``|(x, xh)|_diag = |x - xh| / sqrt(2)``, the local function is
    stored as ``w 2^(p/2) dist^p`` and the alpha bounds are rescaled alike.
    """
    n = os.n
    _check_output(os.h, os.ny, n)
    _sandwich(os, np.random.default_rng(seed))
    hx = _slice(os.h, 0, n)
    fx = _slice(os.f, 0, n)

    def sub(node):
        if isinstance(node, Output):
            return hx.relocate(node.offset)
        if isinstance(node, State):
            a, b = node.sl if node.sl is not None else (0, n)
            return State(node.offset, node.absolute, node.lo, (n + a, n + b))
        return None

    fh = substitute(os.fhat, sub)
    g = os.gain
    k = 2.0 ** (g.p / 2.0)
    gain = GainSpec(lam=g.lam, entries=g.entries, P=g.P, kernel=g.kernel, gamma_u=g.gamma_u,
                    alpha_lo=g.alpha_lo.scaled(k), alpha_hi=g.alpha_hi.scaled(k), p=g.p, q=g.q,
                    col_lo=g.col_lo, null_blocks=g.null_blocks)
    sub_spec = SubsystemSpec(Concat((fx, fh)), 2 * n, 0, DistPowV(os.w * k, g.p))
    net = NetworkSpec(BlockRule((), sub_spec), gain, SetSpec.make((), Diagonal()), g.p, g.q, False, "observer")
    lay = Layout(net.dims, 3, None)
    _, out = sub_spec.f.compile(lay, np.arange(3))
    if out != 2 * n:
        raise ValueError(f"observer dynamics give {out} values, expected {2 * n}")
    return net


def split_pairs(states: np.ndarray, n: int, N: int) -> tuple[np.ndarray, np.ndarray]:
    s = states.reshape(states.shape[:-1] + (N, 2, n))
    return s[..., 0, :].reshape(states.shape[:-1] + (N * n,)), s[..., 1, :].reshape(states.shape[:-1] + (N * n,))


def observer_error_decay(traj, os: ObserverSpec, M: float | None = None, a: float | None = None,
                         tol: float = 1e-6) -> dict:
    """Fit and envelope of ``|x(t) - xh(t)|_p``, with the observer verdict.

    ``M`` and ``a`` come from a certificate of the paired gain data; without
    them a decaying error gives "inconclusive".
    """
    n, N, p = os.n, traj.N, traj.p
    x, xh = split_pairs(traj.states, n, N)
    dims = BlockDims.uniform(n)
    err = lp_norm_flat(x - xh, dims, N, p)
    pair = pair_dist_to_diagonal_flat(x, xh, dims, N, p)
    identity = float(np.max(np.abs(np.sqrt(2.0) * pair - err)))
    s = traj.times - traj.t0
    fitted = {"M": 0.0, "a": float("inf"), "residual": 0.0}
    pos = err > 1e-13 * max(err[0], 1e-300)
    if err[0] > 0 and pos.sum() > 1:
        Mf, af, r = fit_decay(s[pos], err[pos])
        fitted = {"M": Mf, "a": af, "residual": r}
    out = {"fitted": fitted, "distance_identity_error": identity, "error_initial": float(err[0]),
           "error_final": float(err[-1]), "overflow": bool(traj.overflow)}
    if traj.overflow or fitted["a"] < 0:
        verdict = "no"
    elif M is None or a is None:
        verdict = "inconclusive"
    else:
        env = MarginSeries("observer_envelope", traj.times, M * np.exp(-a * s) * err[0] - err, tol)
        out["envelope"] = env.summary()
        out["M"], out["a"] = M, a
        verdict = "yes" if env.passed else "no"
    out["verdict"] = verdict
    out["summary"] = f"robust distributed observer: {verdict}"
    return out
