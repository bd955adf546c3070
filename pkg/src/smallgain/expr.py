"""Composable right-hand sides for block dynamics.

An expression describes ``f_i`` for a generic block ``i``: it reads block
states by relative offset (or absolute index), the block's input, the time,
and combines them with linear maps and a small library of Lipschitz
nonlinearities. Expressions compile into numpy closures that evaluate a
whole group of blocks at once; states may carry leading batch axes.

Sources outside ``[lo, N)`` read zero, which is the truncation policy.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Callable, Sequence

import numpy as np

from .rules import BlockDims, BlockRule, ReciprocalSeq, ScalarSeq


@dataclass
class Layout:
    """Flat-vector geometry of one truncation."""

    dims: BlockDims
    N: int
    udims: BlockDims | None = None

    def __post_init__(self):
        self.starts = self.dims.starts(self.N)
        self.D = int(self.starts[-1])
        if self.udims is not None:
            self.ustarts = self.udims.starts(self.N)
            self.Du = int(self.ustarts[-1])
        else:
            self.ustarts = np.zeros(self.N + 1, dtype=np.int64)
            self.Du = 0


class Env:
    """Per-call evaluation environment; ``xe``/``ue`` carry a trailing zero slot."""

    __slots__ = ("xe", "ue", "t", "cache")

    def __init__(self, x: np.ndarray, t: float, u: np.ndarray | None):
        x = np.asarray(x, dtype=float)
        pad = np.zeros(x.shape[:-1] + (1,))
        self.xe = np.concatenate([x, pad], axis=-1)
        if u is None:
            self.ue = pad
        else:
            u = np.asarray(u, dtype=float)
            self.ue = np.concatenate([u, np.zeros(u.shape[:-1] + (1,))], axis=-1)
        self.t = float(t)
        self.cache: dict = {}


Compiled = Callable[[Env], np.ndarray]

_FUNCS: dict[str, Callable] = {
    "sin": np.sin,
    "tanh": np.tanh,
    "cubic": lambda v: v ** 3,
}


def _gather(starts, total, j, valid, n, sl):
    a, b = sl if sl is not None else (0, n)
    if not (0 <= a < b <= n):
        raise ValueError(f"coordinate slice {sl} outside block of size {n}")
    jj = np.where(valid, j, 0)
    g = starts[jj][:, None] + np.arange(a, b)[None, :]
    g[~valid] = total  # the zero slot
    return g


def _uniform_dim(dims: BlockDims, j, valid) -> int:
    sizes = {dims[int(v)] for v in j[valid]}
    if len(sizes) > 1:
        raise ValueError("blocks read by one expression group must share a dimension")
    return sizes.pop() if sizes else dims[max(int(j[0]), 0)]


def _coef(c, idx: np.ndarray) -> np.ndarray | float:
    if isinstance(c, (ScalarSeq, ReciprocalSeq)):
        return np.asarray(c.at(idx), dtype=float)[:, None]
    return float(c)


class Expr:
    def compile(self, lay: Layout, idx: np.ndarray) -> tuple[Compiled, int]:
        raise NotImplementedError

    def children(self) -> tuple["Expr", ...]:
        return ()

    def with_children(self, kids: Sequence["Expr"]) -> "Expr":
        return self

    def relocate(self, k: int) -> "Expr":
        """Same expression written for block ``i`` but evaluating block ``i + k``'s data."""
        return self.with_children([c.relocate(k) for c in self.children()])

    def augment(self, d: int, clock: int | None = None) -> "Expr":
        """Rewrite for a network with ``d`` extra blocks prepended.

        With ``clock`` set, explicit time is replaced by the first coordinate
        of that (new) block.
        """
        return self.with_children([c.augment(d, clock) for c in self.children()])

    def __add__(self, other: "Expr") -> "Expr":
        return Sum((self, other))

    def __sub__(self, other: "Expr") -> "Expr":
        return Sum((self, Scale(-1.0, other)))

    def __rmul__(self, c) -> "Expr":
        return Scale(c, self)

    def __neg__(self) -> "Expr":
        return Scale(-1.0, self)


def substitute(e: Expr, fn: Callable[[Expr], Expr | None]) -> Expr:
    """Bottom-up rewrite: ``fn`` may return a replacement for any node."""
    kids = [substitute(c, fn) for c in e.children()]
    e2 = e.with_children(kids) if kids else e
    r = fn(e2)
    return e2 if r is None else r


def walk(e: Expr):
    yield e
    for c in e.children():
        yield from walk(c)


@dataclass(frozen=True)
class State(Expr):
    """Block ``i + offset`` (or block ``absolute``), optionally a coordinate slice."""

    offset: int = 0
    absolute: int | None = None
    lo: int = 0
    sl: tuple[int, int] | None = None

    def compile(self, lay, idx):
        j = idx + self.offset if self.absolute is None else np.full_like(idx, self.absolute)
        valid = (j >= self.lo) & (j < lay.N) & (j >= 0)
        n = _uniform_dim(lay.dims, j, valid)
        g = _gather(lay.starts, lay.D, j, valid, n, self.sl)
        return (lambda env: env.xe[..., g]), g.shape[1]

    def relocate(self, k):
        return self if self.absolute is not None else replace(self, offset=self.offset + k)

    def augment(self, d, clock=None):
        a = None if self.absolute is None else self.absolute + d
        return replace(self, absolute=a, lo=self.lo + d)


@dataclass(frozen=True)
class Input(Expr):
    """External input block ``i + offset``."""

    offset: int = 0
    sl: tuple[int, int] | None = None

    def compile(self, lay, idx):
        if lay.udims is None:
            raise ValueError("expression reads an input but the network has none")
        j = idx + self.offset
        valid = (j >= 0) & (j < lay.N)
        m = _uniform_dim(lay.udims, j, valid)
        g = _gather(lay.ustarts, lay.Du, j, valid, m, self.sl)
        return (lambda env: env.ue[..., g]), g.shape[1]

    def relocate(self, k):
        return replace(self, offset=self.offset + k)

    def augment(self, d, clock=None):
        return replace(self, offset=self.offset - d)


@dataclass(frozen=True)
class Const(Expr):
    value: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "value", tuple(float(v) for v in np.ravel(self.value)))

    def compile(self, lay, idx):
        v = np.broadcast_to(np.asarray(self.value), (idx.shape[0], len(self.value)))
        return (lambda env: v), len(self.value)


@dataclass(frozen=True)
class Lin(Expr):
    """Matrix times an expression."""

    M: tuple
    of: Expr

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        object.__setattr__(self, "M", tuple(map(tuple, M)))

    def children(self):
        return (self.of,)

    def with_children(self, kids):
        return replace(self, of=kids[0])

    def compile(self, lay, idx):
        f, n = self.of.compile(lay, idx)
        MT = np.asarray(self.M).T
        if MT.shape[0] != n:
            raise ValueError(f"matrix expects {MT.shape[0]} inputs, expression gives {n}")
        return (lambda env: f(env) @ MT), MT.shape[1]


@dataclass(frozen=True)
class Sum(Expr):
    terms: tuple[Expr, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("empty sum")

    def children(self):
        return self.terms

    def with_children(self, kids):
        return Sum(tuple(kids))

    def compile(self, lay, idx):
        parts = [t.compile(lay, idx) for t in self.terms]
        dims = {n for _, n in parts}
        if len(dims) != 1:
            raise ValueError(f"summands have different sizes {sorted(dims)}")
        fns = [f for f, _ in parts]

        def run(env):
            out = fns[0](env)
            for f in fns[1:]:
                out = out + f(env)
            return out

        return run, dims.pop()


@dataclass(frozen=True)
class Scale(Expr):
    """Scalar or block-indexed coefficient times an expression.

    With ``guard`` set, the coefficient vanishes for blocks ``i`` whose
    partner ``i + guard`` lies outside ``[guard_lo, N)``; this drops edges
    that leave the truncation.
    """

    coef: Any
    of: Expr
    guard: int | None = None
    guard_lo: int = 0

    def children(self):
        return (self.of,)

    def with_children(self, kids):
        return replace(self, of=kids[0])

    def compile(self, lay, idx):
        f, n = self.of.compile(lay, idx)
        c = _coef(self.coef, idx)
        if self.guard is not None:
            j = idx + self.guard
            ok = ((j >= self.guard_lo) & (j < lay.N)).astype(float)[:, None]
            c = c * ok
        return (lambda env: c * f(env)), n

    def relocate(self, k):
        coef = self.coef.shift(k) if hasattr(self.coef, "shift") else self.coef
        g = None if self.guard is None else self.guard + k
        return replace(self, coef=coef, of=self.of.relocate(k), guard=g)

    def augment(self, d, clock=None):
        coef = self.coef.shift(-d) if hasattr(self.coef, "shift") else self.coef
        return replace(self, coef=coef, of=self.of.augment(d, clock), guard_lo=self.guard_lo + d)


@dataclass(frozen=True)
class Apply(Expr):
    """Elementwise nonlinearity: sat, sin, tanh, cubic or a piecewise-linear lookup."""

    fn: str
    of: Expr
    limit: float = 1.0
    xs: tuple[float, ...] = ()
    ys: tuple[float, ...] = ()

    def __post_init__(self):
        if self.fn not in ("sat", "lookup", *_FUNCS):
            raise ValueError(f"unknown nonlinearity {self.fn!r}")
        if self.fn == "lookup":
            xs = np.asarray(self.xs, dtype=float)
            if xs.size < 2 or xs.size != len(self.ys) or np.any(np.diff(xs) <= 0):
                raise ValueError("lookup needs increasing xs and matching ys")
        object.__setattr__(self, "xs", tuple(float(v) for v in self.xs))
        object.__setattr__(self, "ys", tuple(float(v) for v in self.ys))

    def children(self):
        return (self.of,)

    def with_children(self, kids):
        return replace(self, of=kids[0])

    @property
    def lipschitz(self) -> float:
        """Global Lipschitz constant (``inf`` for the cubic)."""
        if self.fn in ("sat", "sin", "tanh"):
            return 1.0
        if self.fn == "lookup":
            return float(np.max(np.abs(np.diff(self.ys) / np.diff(self.xs))))
        return np.inf

    def compile(self, lay, idx):
        f, n = self.of.compile(lay, idx)
        if self.fn == "sat":
            lim = self.limit
            g = lambda v: np.clip(v, -lim, lim)
        elif self.fn == "lookup":
            xs, ys = np.asarray(self.xs), np.asarray(self.ys)
            g = lambda v: np.interp(v, xs, ys)
        else:
            g = _FUNCS[self.fn]
        return (lambda env: g(f(env))), n


@dataclass(frozen=True)
class TimeMod(Expr):
    """``(c0 + c1 sin(omega * tau + phi)) * of`` with ``tau`` the time or a clock state."""

    of: Expr
    c0: float = 1.0
    c1: float = 0.0
    omega: float = 1.0
    phi: float = 0.0
    clock: int | None = None

    def children(self):
        return (self.of,)

    def with_children(self, kids):
        return replace(self, of=kids[0])

    def augment(self, d, clock=None):
        c = self.clock + d if self.clock is not None else clock
        return replace(self, of=self.of.augment(d, clock), clock=c)

    def compile(self, lay, idx):
        f, n = self.of.compile(lay, idx)
        c0, c1, w, ph = self.c0, self.c1, self.omega, self.phi
        if self.clock is None:
            return (lambda env: (c0 + c1 * np.sin(w * env.t + ph)) * f(env)), n
        ci = int(lay.starts[self.clock])

        def run(env):
            tau = env.xe[..., ci][..., None, None]
            return (c0 + c1 * np.sin(w * tau + ph)) * f(env)

        return run, n


@dataclass(frozen=True)
class Aggregate(Expr):
    """``sum_{start <= j < N} w_j term_j`` (optionally divided by the weight total).

    ``term`` is written in block ``j``'s own context. The value is shared by
    every block and memoized per evaluation.
    """

    weights: Any
    term: Any  # Expr or BlockRule of Expr
    start: int = 0
    normalize: bool = False

    def _rule(self) -> BlockRule:
        return self.term if isinstance(self.term, BlockRule) else BlockRule((), self.term)

    def children(self):
        r = self._rule()
        return tuple(r.prefix) + (r.tail,)

    def with_children(self, kids):
        kids = list(kids)
        if isinstance(self.term, BlockRule):
            return replace(self, term=BlockRule(tuple(kids[:-1]), kids[-1]))
        return replace(self, term=kids[-1])

    def relocate(self, k):
        return self  # global quantity, independent of the reading block

    def augment(self, d, clock=None):
        w = self.weights.shift(-d) if hasattr(self.weights, "shift") else self.weights
        r = self._rule()
        tail = r.tail.augment(d, clock)
        # blocks below the new start are never summed; the filler only keeps indices aligned
        prefix = (tail,) * d + tuple(e.augment(d, clock) for e in r.prefix) if r.prefix else ()
        return replace(self, weights=w, term=BlockRule(prefix, tail), start=self.start + d)

    def compile(self, lay, idx):
        groups = [(e, ix[ix >= self.start]) for e, ix in self._rule().groups(lay.N)]
        groups = [(e, ix) for e, ix in groups if ix.size]
        wseq = self.weights if hasattr(self.weights, "at") else ScalarSeq.const(float(self.weights))
        parts = []
        n_out = None
        wsum = 0.0
        for e, ix in groups:
            f, n = e.compile(lay, ix)
            if n_out is not None and n != n_out:
                raise ValueError("aggregate terms have different sizes")
            n_out = n
            w = np.asarray(wseq.at(ix), dtype=float)
            wsum += float(w.sum())
            parts.append((f, w[:, None]))
        if n_out is None:
            n_out = self._rule().tail.compile(lay, np.array([max(self.start, 0)]))[1]
        scale = 1.0 / wsum if (self.normalize and wsum > 0) else 1.0
        key = id(self)
        G = idx.shape[0]

        def total(env):
            hit = env.cache.get(key)
            if hit is None:
                acc = np.zeros(env.xe.shape[:-1] + (n_out,))
                for f, w in parts:
                    acc = acc + (w * f(env)).sum(axis=-2)
                hit = env.cache[key] = scale * acc
            return hit[..., None, :] * np.ones((G, 1))

        return total, n_out


@dataclass(frozen=True)
class Concat(Expr):
    parts: tuple[Expr, ...]

    def children(self):
        return tuple(self.parts)

    def with_children(self, kids):
        return Concat(tuple(kids))

    def compile(self, lay, idx):
        cs = [p.compile(lay, idx) for p in self.parts]
        fns = [f for f, _ in cs]
        return (lambda env: np.concatenate(np.broadcast_arrays(*[f(env) for f in fns]), axis=-1)), sum(n for _, n in cs)


@dataclass(frozen=True)
class Part(Expr):
    """Coordinates ``a:b`` of an expression."""

    of: Expr
    a: int
    b: int

    def children(self):
        return (self.of,)

    def with_children(self, kids):
        return replace(self, of=kids[0])

    def compile(self, lay, idx):
        f, n = self.of.compile(lay, idx)
        if not (0 <= self.a < self.b <= n):
            raise ValueError("part slice out of range")
        a, b = self.a, self.b
        return (lambda env: f(env)[..., a:b]), b - a


@dataclass(frozen=True)
class Output(Expr):
    """Placeholder for the measured output of block ``i + offset`` (observer specs)."""

    offset: int = 0

    def relocate(self, k):
        return replace(self, offset=self.offset + k)

    def compile(self, lay, idx):
        raise ValueError("Output placeholders must be substituted before compiling")


def uses_time(e: Expr) -> bool:
    return any(isinstance(n, TimeMod) and n.clock is None for n in walk(e))


def uses_input(e: Expr) -> bool:
    return any(isinstance(n, Input) for n in walk(e))


# --------------------------------------------------------------------------
# dict form used by config files


def _seq(v):
    if isinstance(v, dict):
        s = ScalarSeq(tuple(v.get("prefix", ())), float(v.get("tail", 0.0)),
                      float(v.get("ratio", 1.0)), int(v.get("offset", 0)))
        return s.reciprocal() if v.get("reciprocal") else s
    return float(v)


def from_dict(d: Any) -> Expr:
    """Build an expression from its nested-dict form."""
    if isinstance(d, list):
        return Sum(tuple(from_dict(v) for v in d))
    if not isinstance(d, dict) or len(d) != 1:
        raise ValueError(f"expression node must be a one-key mapping, got {d!r}")
    (kind, a), = d.items()
    a = {} if a is None else a
    if kind == "state":
        sl = tuple(a["slice"]) if "slice" in a else None
        return State(int(a.get("offset", 0)), a.get("absolute"), int(a.get("lo", 0)), sl)
    if kind == "input":
        sl = tuple(a["slice"]) if "slice" in a else None
        return Input(int(a.get("offset", 0)), sl)
    if kind == "const":
        return Const(tuple(np.ravel(a)))
    if kind == "sum":
        return Sum(tuple(from_dict(v) for v in a))
    if kind == "lin":
        return Lin(a["M"], from_dict(a["of"]))
    if kind == "scale":
        g = a.get("guard")
        return Scale(_seq(a["coef"]), from_dict(a["of"]), None if g is None else int(g), int(a.get("guard_lo", 0)))
    if kind == "apply":
        return Apply(a["fn"], from_dict(a["of"]), float(a.get("limit", 1.0)),
                     tuple(a.get("xs", ())), tuple(a.get("ys", ())))
    if kind == "timemod":
        return TimeMod(from_dict(a["of"]), float(a.get("c0", 1.0)), float(a.get("c1", 0.0)),
                       float(a.get("omega", 1.0)), float(a.get("phi", 0.0)), a.get("clock"))
    if kind == "aggregate":
        return Aggregate(_seq(a["weights"]), from_dict(a["term"]), int(a.get("start", 0)),
                         bool(a.get("normalize", False)))
    if kind == "concat":
        return Concat(tuple(from_dict(v) for v in a))
    if kind == "part":
        return Part(from_dict(a["of"]), int(a["a"]), int(a["b"]))
    if kind == "output":
        return Output(int(a.get("offset", 0)))
    raise ValueError(f"unknown expression kind {kind!r}")
