"""Gain operator ``Psi = Lambda^{-1} Gamma`` of an infinite network.

The infinite matrix ``Gamma`` is stored as explicit entries for the first
``P`` rows plus a Toeplitz kernel ``gamma_{i, i+k} = c_k`` for rows ``i >= P``.
Spectral radius is bracketed: truncations and the kernel symbol give
certified lower bounds, positive weight vectors give certified upper bounds.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigs

from .rules import ScalarSeq

log = logging.getLogger(__name__)

# relative slack when comparing weighted column sums against a claimed bound
CERT_RTOL = 1e-12


class SpecError(ValueError):
    """Gain data violates a structural requirement."""


# --------------------------------------------------------------------------
# tail kernels


@dataclass(frozen=True)
class BandedKernel:
    """Finitely many diagonals: ``gamma_{i, i+k} = c_k``."""

    offsets: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        items = tuple(sorted((int(k), float(c)) for k, c in dict(self.offsets).items()))
        for k, c in items:
            if k == 0 and c != 0.0:
                raise SpecError("kernel has a diagonal entry; gains gamma_ii must be 0")
            if c < 0 or not np.isfinite(c):
                raise SpecError(f"kernel coefficient c_{k}={c} must be finite and >= 0")
        object.__setattr__(self, "offsets", tuple((k, c) for k, c in items if c != 0.0))

    @classmethod
    def tridiagonal(cls, c: float) -> "BandedKernel":
        return cls(((-1, c), (1, c)))

    @property
    def total(self) -> float:
        return float(sum(c for _, c in self.offsets))

    @property
    def reach(self) -> int:
        return max((abs(k) for k, _ in self.offsets), default=0)

    geometric = False

    def to_dict(self):
        return {"kind": "banded", "offsets": {str(k): c for k, c in self.offsets}}


@dataclass(frozen=True)
class GeometricKernel:
    """All off-diagonals: ``gamma_{i, i+k} = c * ratio**|k|`` for ``k != 0``."""

    c: float
    ratio: float

    def __post_init__(self):
        if self.c < 0 or not (0.0 < self.ratio < 1.0):
            raise SpecError("geometric kernel needs c >= 0 and ratio in (0, 1)")

    @property
    def total(self) -> float:
        return 2.0 * self.c * self.ratio / (1.0 - self.ratio)

    @property
    def reach(self) -> int:
        return 1

    geometric = True

    def residual(self, gap: int) -> float:
        """``sum_{d >= gap} c ratio**d``."""
        return self.c * self.ratio ** gap / (1.0 - self.ratio)

    def to_dict(self):
        return {"kind": "geometric", "c": self.c, "ratio": self.ratio}


Kernel = BandedKernel | GeometricKernel


# --------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class GainSpec:
    """Decay rates, internal gains and bounds of the local Lyapunov data.

    Parameters
    ----------
    lam : ScalarSeq
        Decay rates ``lambda_i > 0``; the tail must be constant.
    entries : sequence of (i, j, gamma_ij)
        Explicit gains for rows ``i < P``.
    P : int
        First row governed by ``kernel``.
    kernel : BandedKernel or GeometricKernel
        Tail structure; kernel columns below ``col_lo`` are cut off.
    null_blocks : indices whose local function is identically zero; they
        carry no dissipation requirement and are left out of the bounds.
    """

    lam: ScalarSeq
    entries: tuple[tuple[int, int, float], ...] = ()
    P: int = 0
    kernel: Kernel = field(default_factory=BandedKernel)
    gamma_u: ScalarSeq = field(default_factory=lambda: ScalarSeq.const(1.0))
    alpha_lo: ScalarSeq = field(default_factory=lambda: ScalarSeq.const(1.0))
    alpha_hi: ScalarSeq = field(default_factory=lambda: ScalarSeq.const(1.0))
    p: float = 2.0
    q: float = 2.0
    col_lo: int = 0
    null_blocks: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "lam", ScalarSeq.coerce(self.lam))
        object.__setattr__(self, "gamma_u", ScalarSeq.coerce(self.gamma_u))
        object.__setattr__(self, "alpha_lo", ScalarSeq.coerce(self.alpha_lo))
        object.__setattr__(self, "alpha_hi", ScalarSeq.coerce(self.alpha_hi))
        object.__setattr__(self, "null_blocks", frozenset(int(i) for i in self.null_blocks))
        ents = tuple((int(i), int(j), float(g)) for i, j, g in self.entries)
        object.__setattr__(self, "entries", ents)
        if self.lam.geometric:
            raise SpecError("decay rates need a constant tail (lambda bounded below)")
        if self.lam.inf() <= 0:
            raise SpecError("decay rates must be positive")
        for i, j, g in ents:
            if i == j:
                raise SpecError(f"gamma_{i}{i} must be 0 (no self-gain)")
            if g < 0 or not np.isfinite(g):
                raise SpecError(f"gamma_{i},{j}={g} must be finite and >= 0")
            if i >= self.P or i < 0 or j < 0:
                raise SpecError(f"explicit entry ({i},{j}) outside rows 0..P-1")
        if not (1.0 <= self.p < np.inf and 1.0 <= self.q < np.inf):
            raise SpecError("exponents p, q must lie in [1, inf)")
        if any(i >= self.P and i >= len(self.lam.prefix) for i in self.null_blocks):
            raise SpecError("null blocks must lie in the explicit prefix")

    @property
    def boundary(self) -> int:
        """Index from which rows, rates and columns follow the tail rules."""
        max_col = max((j for _, j, _ in self.entries), default=-1)
        return max(self.P, len(self.lam.prefix), max_col + 1, self.col_lo,
                   max(self.null_blocks, default=-1) + 1)

    def _active(self, seq: ScalarSeq, reducer) -> float:
        L = self.boundary
        vals = [seq.at(i) for i in range(L) if i not in self.null_blocks]
        tail = seq.inf(L) if reducer is min else seq.sup(L)
        return float(reducer(vals + [tail]))

    @property
    def lam_lo(self) -> float:
        return self._active(self.lam, min)

    @property
    def lam_hi(self) -> float:
        return self._active(self.lam, max)

    @property
    def gamma_u_hi(self) -> float:
        return self._active(self.gamma_u, max)

    @property
    def alpha_lo_inf(self) -> float:
        return self._active(self.alpha_lo, min)

    @property
    def alpha_hi_sup(self) -> float:
        return self._active(self.alpha_hi, max)

    def scaled(self, c: float) -> "GainSpec":
        """Same spec with ``(Lambda, Gamma)`` replaced by ``(c Lambda, c Gamma)``."""
        k = self.kernel
        if isinstance(k, GeometricKernel):
            k2 = GeometricKernel(c * k.c, k.ratio)
        else:
            k2 = BandedKernel(tuple((o, c * v) for o, v in k.offsets))
        return replace(self, lam=self.lam.scaled(c),
                       entries=tuple((i, j, c * g) for i, j, g in self.entries), kernel=k2)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam.to_dict(),
            "entries": [list(e) for e in self.entries],
            "P": self.P,
            "kernel": self.kernel.to_dict(),
            "col_lo": self.col_lo,
            "gamma_u": self.gamma_u.to_dict(),
            "alpha_lo": self.alpha_lo.to_dict(),
            "alpha_hi": self.alpha_hi.to_dict(),
            "p": self.p,
            "q": self.q,
            "null_blocks": sorted(self.null_blocks),
        }


def tridiagonal_spec(c: float, lam: float = 1.0, **kw) -> GainSpec:
    """Chain ``gamma_{i, i+-1} = c``, ``lambda_i = lam`` starting at block 0."""
    return GainSpec(lam=ScalarSeq.const(lam), kernel=BandedKernel.tridiagonal(c), **kw)


class GainOperator:
    """Lazy views of ``Lambda``, ``Gamma`` and ``Psi`` with truncations."""

    def __init__(self, spec: GainSpec):
        self.spec = spec

    @property
    def lam_tail(self) -> float:
        return self.spec.lam.at(self.spec.boundary)

    def lam_vec(self, n: int) -> np.ndarray:
        return self.spec.lam.at(np.arange(n))

    def gamma_block(self, rows: int, cols: int) -> sp.csr_matrix:
        """Rows ``0..rows-1`` and columns ``0..cols-1`` of ``Gamma``."""
        s = self.spec
        I, J, V = [], [], []
        for i, j, g in s.entries:
            if i < rows and j < cols and g != 0.0:
                I.append(i)
                J.append(j)
                V.append(g)
        I = [np.asarray(I, dtype=np.int64)]
        J = [np.asarray(J, dtype=np.int64)]
        V = [np.asarray(V, dtype=float)]
        k = s.kernel
        r0 = min(s.P, rows)
        ri = np.arange(r0, rows)
        if isinstance(k, GeometricKernel):
            if k.c > 0 and ri.size:
                cj = np.arange(s.col_lo, cols)
                d = np.abs(cj[None, :] - ri[:, None])
                vals = np.where(d > 0, k.c * k.ratio ** d.astype(float), 0.0)
                ii, jj = np.nonzero(vals)
                I.append(ri[ii])
                J.append(cj[jj])
                V.append(vals[ii, jj])
        else:
            for off, c in k.offsets:
                j = ri + off
                m = (j >= s.col_lo) & (j < cols) & (j >= 0)
                I.append(ri[m])
                J.append(j[m])
                V.append(np.full(int(m.sum()), c))
        return sp.csr_matrix(
            (np.concatenate(V), (np.concatenate(I), np.concatenate(J))), shape=(rows, cols)
        )

    def truncation(self, N: int) -> tuple[sp.dia_matrix, sp.csr_matrix, sp.csr_matrix]:
        """Leading ``N x N`` sections ``(Lambda_N, Gamma_N, Psi_N)``."""
        lam = self.lam_vec(N)
        G = self.gamma_block(N, N)
        Psi = sp.diags(1.0 / lam) @ G
        return sp.diags(lam), G, sp.csr_matrix(Psi)

    def psi(self, N: int) -> sp.csr_matrix:
        return self.truncation(N)[2]

    def column_functional(self, w_prefix, w_tail: float, J: int, psi: bool = False):
        """Weighted column sums ``(w^T M)_j`` of the infinite matrix ``M``.

        ``M`` is ``Psi`` when ``psi`` is set, else ``Gamma``; ``w`` is the prefix
        followed by the constant ``w_tail``. Returns exact values for ``j < J``
        and ``(limit, lower, upper)`` bounding every column ``j >= J``.
        ``J`` is raised when needed so the tail bounds are valid.
        """
        s = self.spec
        k = s.kernel
        wp = np.asarray(w_prefix, dtype=float)
        Lw = wp.shape[0]
        M0 = max(s.boundary, Lw)
        J = max(J, M0 + k.reach)
        L = J + (k.reach if not k.geometric else 1)
        L = max(L, M0)
        w = np.full(L, float(w_tail))
        w[:Lw] = wp
        lam = self.lam_vec(L)
        omega = w / lam if psi else w
        omega_t = w_tail / self.lam_tail if psi else w_tail
        vals = np.asarray(self.gamma_block(L, J).T @ omega).ravel()
        if k.geometric and k.c > 0:
            # rows i >= L, all with weight omega_t, contribute omega_t * c r^{i-j}
            j = np.arange(J)
            vals = vals + omega_t * k.c * k.ratio ** (L - j).astype(float) / (1.0 - k.ratio)
        limit = omega_t * k.total
        if k.geometric and k.c > 0:
            # rows below M0 sit at distance >= J - M0 + 1 from any column j >= J
            e = k.residual(J - M0 + 1)
            lead = omega[s.P:M0] if M0 > s.P else np.zeros(0)
            excess = max(0.0, float(lead.max(initial=0.0)) - omega_t)
            upper = limit + excess * e
            lower = max(0.0, limit - omega_t * e)
        else:
            upper = lower = limit
        return vals, (limit, lower, upper)


# --------------------------------------------------------------------------
# Assumption 3


@dataclass(frozen=True)
class GammaNorm:
    schedule: tuple[int, ...]
    estimates: tuple[float, ...]
    sup: float
    bounded: bool

    def to_dict(self):
        return {"schedule": list(self.schedule), "estimates": list(self.estimates),
                "sup": self.sup, "bounded": self.bounded}


def gamma_norm_11(op: GainOperator, N_schedule: Sequence[int] = (8, 16, 32, 64), cap: float = 1e12) -> GammaNorm:
    """``sup_{j < N} sum_i gamma_ij`` for each ``N``; column sums run over all rows."""
    sched = tuple(sorted(int(n) for n in N_schedule))
    if not sched or sched[0] < 1:
        raise ValueError("schedule must contain positive truncation lengths")
    if not np.isfinite(op.spec.kernel.total):
        raise SpecError("tail kernel columns are not summable")
    vals, (_, _, upper) = op.column_functional(np.zeros(0), 1.0, sched[-1])
    est = tuple(float(vals[:n].max(initial=0.0)) for n in sched)
    sup = max(float(vals.max(initial=0.0)), upper)
    return GammaNorm(sched, est, sup, bool(sup <= cap))


# --------------------------------------------------------------------------
# Perron roots of truncations


@dataclass(frozen=True)
class PerronResult:
    value: float
    lower: float
    upper: float
    iterations: int
    converged: bool


def _start_vector(A: np.ndarray | sp.spmatrix) -> np.ndarray:
    n = A.shape[0]
    if n <= 1500:
        dense = A.toarray() if sp.issparse(A) else A
        w, V = scipy.linalg.eig(dense)
        v = V[:, int(np.argmax(w.real))]
    else:
        _, V = eigs(sp.csr_matrix(A), k=1, which="LR")
        v = V[:, 0]
    v = np.abs(v.real)
    top = v.max()
    if not np.isfinite(top) or top == 0:
        return np.ones(n)
    return np.maximum(v / top, 1e-12)


def perron_root(A, tol: float = 1e-10, max_iter: int = 10_000) -> PerronResult:
    """Perron root of an irreducible nonnegative matrix.

    Shifted power iteration warm-started from a dense eigenvector; the
    Collatz-Wielandt quotients ``min/max (Av)_i / v_i`` bracket the root at
    every step, so ``lower`` is certified whatever the convergence state.
    Entries of ``v`` that decay below ``1e-150`` of the maximum are left out of
    the quotients; ``upper`` then bounds the retained block only.
    """
    A = sp.csr_matrix(A, dtype=float)
    n = A.shape[0]
    if n == 1:
        a = float(A[0, 0])
        return PerronResult(a, a, a, 0, True)
    rowsum = np.asarray(A.sum(axis=1)).ravel()
    shift = 1e-3 * float(rowsum.max()) or 1.0
    B = A + shift * sp.identity(n, format="csr")
    v = _start_vector(A)
    lo = hi = 0.0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        # quotients on the principal block where v is representable; a
        # principal submatrix has a smaller Perron root, so lo stays certified
        mask = v > 1e-150 * v.max()
        w = B @ (v * mask)
        q = w[mask] / v[mask]
        lo, hi = float(q.min()), float(q.max())
        w = B @ v
        if hi - lo <= tol * hi:
            converged = True
            break
        v = w / np.linalg.norm(w)
        v = np.maximum(v, np.finfo(float).tiny)
    if not converged:
        log.warning("power iteration hit %d iterations (bracket %.3e)", max_iter, hi - lo)
    return PerronResult(0.5 * (lo + hi) - shift, max(lo - shift, 0.0), hi - shift, it, converged)


def truncation_radius(Psi: sp.spmatrix, tol: float = 1e-10, max_iter: int = 10_000) -> PerronResult:
    """``r(Psi_N)`` as the largest Perron root over strongly connected components."""
    Psi = sp.csr_matrix(Psi)
    n = Psi.shape[0]
    if n == 0 or Psi.nnz == 0:
        return PerronResult(0.0, 0.0, 0.0, 0, True)
    ncomp, labels = connected_components(Psi, directed=True, connection="strong")
    diag = Psi.diagonal()
    value = lower = upper = 0.0
    iters, converged = 0, True
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        if idx.size == 1 and diag[idx[0]] == 0.0:
            continue  # no cycle through this vertex
        res = perron_root(Psi[idx][:, idx], tol, max_iter)
        value, lower, upper = max(value, res.value), max(lower, res.lower), max(upper, res.upper)
        iters += res.iterations
        converged = converged and res.converged
    return PerronResult(value, lower, upper, iters, converged)


@dataclass(frozen=True)
class SpectralResult:
    """Bracket ``[lower, upper]`` for ``r(Psi)`` and how it was obtained."""

    schedule: tuple[int, ...]
    truncation: tuple[float, ...]
    truncation_lower: tuple[float, ...]
    tail_bound: float
    upper_ones: float
    converged: bool
    iterations_ok: bool

    @property
    def trunc_lower(self) -> float:
        return max(self.truncation_lower, default=0.0)

    @property
    def lower(self) -> float:
        return max(self.trunc_lower, self.tail_bound)

    @property
    def r_hat(self) -> float:
        return self.lower

    @property
    def upper(self) -> float:
        return self.upper_ones

    @property
    def bracket(self) -> tuple[float, float]:
        """Truncation bracket ``[max_N r(Psi_N), s]`` with ``s`` from the all-ones weight."""
        return (self.trunc_lower, self.upper_ones)

    def to_dict(self):
        return {
            "schedule": list(self.schedule),
            "truncation": list(self.truncation),
            "truncation_lower": list(self.truncation_lower),
            "tail_bound": self.tail_bound,
            "lower": self.lower,
            "upper_ones": self.upper_ones,
            "converged": self.converged,
        }


def spectral_radius(op: GainOperator, N_schedule: Sequence[int] = (8, 16, 32, 64, 128),
                    tol: float = 1e-6, power_tol: float = 1e-10, max_iter: int = 10_000) -> SpectralResult:
    """Bracket ``r(Psi)`` from truncations, the tail symbol and the all-ones weight."""
    sched = tuple(sorted(set(int(n) for n in N_schedule)))
    if not sched or sched[0] < 1:
        raise ValueError("schedule must contain positive truncation lengths")
    vals, lows, ok = [], [], True
    for N in sched:
        res = truncation_radius(op.psi(N), power_tol, max_iter)
        vals.append(res.value)
        lows.append(res.lower)
        ok = ok and res.converged
    # Toeplitz tail: shifted finitely supported vectors see the full symbol,
    # so ||Psi^n|| >= a^n and r(Psi) >= a
    tail = op.spec.kernel.total / op.lam_tail
    # all-ones weight: the sup of the column sums of Psi is a certified upper bound
    upper = weight_ratio(op, ScalarSeq.const(1.0))
    converged = len(vals) >= 2 and abs(vals[-1] - vals[-2]) < tol and np.isfinite(upper)
    return SpectralResult(sched, tuple(vals), tuple(lows), float(tail), float(upper), bool(converged), ok)


# --------------------------------------------------------------------------
# upper bounds from positive weights


def _as_weight(mu) -> ScalarSeq:
    mu = ScalarSeq.coerce(mu)
    if mu.geometric:
        raise SpecError("weight vector needs a constant tail")
    return mu


def weight_ratio(op: GainOperator, mu) -> float:
    """``sup_j (mu^T Psi)_j / mu_j``; a certified upper bound for ``r(Psi)``."""
    mu = _as_weight(mu)
    if mu.inf() <= 0:
        raise SpecError("weight vector must be strictly positive")
    pre = np.asarray(mu.prefix)
    vals, (_, _, up) = op.column_functional(pre, mu.tail, max(len(pre), 1), psi=True)
    ratios = vals / mu.at(np.arange(vals.shape[0]))
    return max(float(ratios.max(initial=0.0)), up / mu.tail)


def upper_bound_certificate(op: GainOperator, mu, s: float) -> bool:
    """True iff ``(mu^T Psi)_j <= s mu_j`` at every index, tail included."""
    return weight_ratio(op, mu) <= s * (1.0 + CERT_RTOL)


# --------------------------------------------------------------------------
# mu vector


@dataclass(frozen=True)
class MuResult:
    ok: bool
    mu: ScalarSeq
    nu: ScalarSeq
    lambda_inf: float
    rate_floor: float
    r_hat: float
    s: float
    K: int
    margins: np.ndarray
    tail_rate: float
    upper: float
    message: str = ""

    @property
    def min_margin(self) -> float:
        return float(min(self.margins.min(initial=np.inf), self.tail_rate - self.lambda_inf))


def dissipation_rates(op: GainOperator, mu: ScalarSeq, J: int | None = None):
    """``-[mu^T(-Lambda + Gamma)]_j / mu_j`` for ``j < J`` and a lower bound for the tail."""
    pre = np.asarray(mu.prefix)
    J = max(J or 0, len(pre), 1)
    vals, (_, _, up) = op.column_functional(pre, mu.tail, J)
    n = vals.shape[0]
    rates = op.lam_vec(n) - vals / mu.at(np.arange(n))
    tail = op.lam_tail - up / mu.tail
    return rates, float(tail)


def _nu_series(op: GainOperator, s: float, threshold: float, L: int, K_max: int):
    """Partial sums of ``sum_k s^{-k} 1^T Psi^k`` on ``L`` entries plus constant tail."""
    a = op.spec.kernel.total / op.lam_tail
    # w holds s^{-k} 1^T Psi^k directly so the powers of 1/s never overflow
    w = np.ones(L)
    wt = 1.0
    nu = np.ones(L)
    nut = 1.0
    for K in range(1, K_max + 1):
        vals, _ = op.column_functional(w, wt, L, psi=True)
        w, wt = vals[:L] / s, wt * a / s
        nu = nu + w
        nut = nut + wt
        if max(float(w.max(initial=0.0)), wt) < threshold:
            return nu, nut, K
    return nu, nut, None


def compute_mu(op: GainOperator, rho: float | None = None, spectral: SpectralResult | None = None,
               L: int | None = None, max_rounds: int = 40, K_max: int = 20_000) -> MuResult:
    """Weight vector ``mu`` making ``sum_i mu_i V_i`` dissipate at rate ``lambda_inf``.

    ``nu = Lambda mu`` is the scaled dual Neumann series in ``s``; the result
    is only accepted after ``mu^T(-Lambda + Gamma) <= -lambda_inf mu^T`` has been
    re-evaluated at every explicit index and bounded on the tail.
    """
    spec = op.spec
    lam_lo, lam_hi = spec.lam_lo, spec.lam_hi
    rho = 1e-3 * lam_lo if rho is None else float(rho)
    if rho <= 0:
        raise ValueError("slack rho must be positive")
    if spectral is None:
        spectral = spectral_radius(op)
    r_hat = spectral.lower
    if r_hat >= 1.0:
        raise SpecError(f"certified lower bound {r_hat:.6g} >= 1: small-gain condition fails")
    floor = (1.0 - r_hat) * lam_lo - rho
    reach = spec.kernel.reach
    L = max(L or 0, spec.boundary + 4 * max(reach, 1), max(spectral.schedule))
    s = 0.5 * (1.0 + r_hat)
    threshold = rho * lam_lo / lam_hi
    null = spec.null_blocks
    best = None
    for _ in range(max_rounds):
        nu, nut, K = _nu_series(op, s, threshold, L, K_max)
        if K is None:
            msg = f"series did not reach tolerance within {K_max} terms at s={s:.6g}"
            best = best or MuResult(False, ScalarSeq.const(1.0), ScalarSeq.const(1.0), 0.0, floor,
                                    r_hat, s, K_max, np.zeros(0), 0.0, np.inf, msg)
            break
        lam = op.lam_vec(L)
        mu = ScalarSeq(tuple(nu / lam), nut / op.lam_tail)
        rates, tail_rate = dissipation_rates(op, mu, L)
        active = np.array([j not in null for j in range(rates.shape[0])])
        lam_inf = float(min(rates[active].min(initial=np.inf), tail_rate))
        upper = weight_ratio(op, ScalarSeq(tuple(nu), nut))
        res = MuResult(lam_inf >= floor and lam_inf > 0, mu, ScalarSeq(tuple(nu), nut), lam_inf, floor,
                       r_hat, s, K, np.where(active, rates - lam_inf, np.inf), tail_rate, upper)
        if res.ok:
            return res
        if best is None or res.lambda_inf > best.lambda_inf:
            best = res
        # the tail term pulls lambda_inf below the bound: move s toward r_hat, tighten tail
        s = 0.5 * (s + r_hat)
        threshold *= 0.5
    msg = (f"lambda_inf={best.lambda_inf:.6g} below (1 - r_hat) lambda_lo - rho = {floor:.6g}"
           if not best.message else best.message)
    return replace(best, ok=False, message=msg)


# --------------------------------------------------------------------------
# certificate


@dataclass(frozen=True)
class Certificate:
    """Composite Lyapunov data ``V = sum mu_i V_i`` with its constants."""

    mu: ScalarSeq
    mu_lo: float
    mu_hi: float
    lambda_inf: float
    p: float
    q: float
    alpha_lo: float
    alpha_hi: float
    gamma_u_hi: float
    r_lower: float
    r_upper: float
    null_blocks: frozenset = frozenset()

    @property
    def input_gain(self) -> float:
        return self.mu_hi * self.gamma_u_hi

    @property
    def coercivity(self) -> tuple[float, float]:
        return (self.mu_lo * self.alpha_lo, self.mu_hi * self.alpha_hi)

    @property
    def M(self) -> float:
        lo, hi = self.coercivity
        return (hi / lo) ** (1.0 / self.p)

    @property
    def a(self) -> float:
        return self.lambda_inf / self.p

    @property
    def gamma_coef(self) -> float:
        return (self.input_gain / (self.lambda_inf * self.coercivity[0])) ** (1.0 / self.p)

    def gamma(self, r):
        """Input gain of the trajectory envelope."""
        return self.gamma_coef * np.asarray(r, dtype=float) ** (self.q / self.p)

    def to_dict(self):
        return {
            "mu": self.mu.to_dict(),
            "mu_lo": self.mu_lo,
            "mu_hi": self.mu_hi,
            "lambda_inf": self.lambda_inf,
            "p": self.p,
            "q": self.q,
            "input_gain": self.input_gain,
            "coercivity": list(self.coercivity),
            "M": self.M,
            "a": self.a,
            "gamma_coef": self.gamma_coef,
            "spectral_bracket": [self.r_lower, self.r_upper],
        }


def _mu_bounds(mu: ScalarSeq, null) -> tuple[float, float]:
    vals = [v for i, v in enumerate(mu.prefix) if i not in null] + [mu.tail]
    return float(min(vals)), float(max(vals))


def assemble_certificate(gain: GainSpec, mu_result: MuResult) -> Certificate:
    if not mu_result.ok:
        raise SpecError(f"no verified weight vector: {mu_result.message}")
    lo, hi = _mu_bounds(mu_result.mu, gain.null_blocks)
    if lo <= 0:
        raise SpecError("weight vector is not bounded away from zero")
    return Certificate(
        mu=mu_result.mu, mu_lo=lo, mu_hi=hi, lambda_inf=mu_result.lambda_inf,
        p=gain.p, q=gain.q, alpha_lo=gain.alpha_lo_inf, alpha_hi=gain.alpha_hi_sup,
        gamma_u_hi=gain.gamma_u_hi, r_lower=mu_result.r_hat, r_upper=mu_result.upper,
        null_blocks=gain.null_blocks,
    )


@dataclass(frozen=True)
class Analysis:
    status: str  # certified | refuted | inconclusive
    norm: GammaNorm
    spectral: SpectralResult
    mu: MuResult | None
    certificate: Certificate | None
    message: str = ""

    @property
    def upper(self) -> float:
        ups = [self.spectral.upper]
        if self.mu is not None and self.mu.ok:
            ups.append(self.mu.upper)
        return float(min(ups))

    def to_dict(self) -> dict:
        d = {
            "status": self.status,
            "message": self.message,
            "gamma_norm_11": self.norm.to_dict(),
            "spectral": self.spectral.to_dict(),
            "bracket": [self.spectral.lower, self.upper],
        }
        if self.mu is not None:
            d["mu_construction"] = {
                "ok": self.mu.ok, "s": self.mu.s, "K": self.mu.K,
                "lambda_inf": self.mu.lambda_inf, "rate_floor": self.mu.rate_floor,
                "tail_rate": self.mu.tail_rate, "min_margin": self.mu.min_margin,
                "message": self.mu.message,
            }
        if self.certificate is not None:
            d["certificate"] = self.certificate.to_dict()
        return d


def analyze(spec: GainSpec, N_schedule: Sequence[int] = (8, 16, 32, 64, 128), rho: float | None = None,
            tol: float = 1e-6) -> Analysis:
    """Full pipeline: norm check, spectral bracket, weight vector, certificate."""
    op = GainOperator(spec)
    norm = gamma_norm_11(op, N_schedule)
    spec_res = spectral_radius(op, N_schedule, tol)
    if not norm.bounded:
        return Analysis("inconclusive", norm, spec_res, None, None, "Gamma column sums unbounded")
    if spec_res.lower >= 1.0:
        return Analysis("refuted", norm, spec_res, None, None,
                        f"r(Psi) >= {spec_res.lower:.6g} >= 1")
    mu = compute_mu(op, rho, spec_res)
    if not mu.ok:
        return Analysis("inconclusive", norm, spec_res, mu, None, mu.message)
    cert = assemble_certificate(spec, mu)
    upper = min(spec_res.upper, mu.upper)
    if upper < 1.0:
        return Analysis("certified", norm, spec_res, mu, cert)
    return Analysis("inconclusive", norm, spec_res, mu, cert, "no certified upper bound below 1")
