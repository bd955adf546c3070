"""Truncated elements of block sequence spaces and distances to product sets.

A state of an infinite network lives in ``l^p(N, (n_i))``: blocks ``x_i`` of
size ``n_i`` with ``sum_i |x_i|^p < inf``. Here a state is always a finite
prefix of ``N`` blocks followed by an implicit zero tail, and per-block norms
are Euclidean.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .rules import BlockDims, BlockRule


class EmptySetError(ValueError):
    """The product set has no element of finite norm."""


def _check_p(p: float) -> float:
    p = float(p)
    if not (1.0 <= p < np.inf):
        raise ValueError(f"exponent p must lie in [1, inf), got {p}")
    return p


# --------------------------------------------------------------------------
# per-block set descriptors


@dataclass(frozen=True)
class Origin:
    """The singleton ``{0}``."""

    def dist(self, v: np.ndarray) -> np.ndarray:
        return np.linalg.norm(v, axis=-1)

    def nearest(self, v):
        return np.zeros_like(v)

    contains_zero = True

    def radius(self, n: int) -> float:
        return 0.0

    def check_dim(self, n: int) -> None:
        pass

    def to_dict(self):
        return {"kind": "origin"}


@dataclass(frozen=True)
class Full:
    """The whole block space ``R^n``."""

    def dist(self, v):
        return np.zeros(np.shape(v)[:-1])

    def nearest(self, v):
        return np.array(v, dtype=float, copy=True)

    contains_zero = True

    def radius(self, n: int) -> float:
        return np.inf

    def check_dim(self, n: int) -> None:
        pass

    def to_dict(self):
        return {"kind": "full"}


@dataclass(frozen=True)
class Point:
    """A single fixed vector."""

    a: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in np.ravel(self.a)))

    def dist(self, v):
        return np.linalg.norm(np.asarray(v) - np.asarray(self.a), axis=-1)

    def nearest(self, v):
        return np.broadcast_to(np.asarray(self.a), np.shape(v)).copy()

    @property
    def contains_zero(self) -> bool:
        return not any(self.a)

    def radius(self, n: int) -> float:
        return float(np.linalg.norm(self.a))

    def check_dim(self, n: int) -> None:
        if len(self.a) != n:
            raise ValueError(f"point has dimension {len(self.a)}, block has {n}")

    def to_dict(self):
        return {"kind": "point", "a": list(self.a)}


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``prod_k [lo_k, hi_k]``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.ravel(self.lo))
        hi = tuple(float(v) for v in np.ravel(self.hi))
        if len(lo) != len(hi) or any(l > h for l, h in zip(lo, hi)):
            raise ValueError("box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def nearest(self, v):
        return np.clip(v, self.lo, self.hi)

    def dist(self, v):
        v = np.asarray(v, dtype=float)
        return np.linalg.norm(v - self.nearest(v), axis=-1)

    @property
    def contains_zero(self) -> bool:
        return all(l <= 0.0 <= h for l, h in zip(self.lo, self.hi))

    def radius(self, n: int) -> float:
        # farthest corner
        return float(np.sqrt(sum(max(l * l, h * h) for l, h in zip(self.lo, self.hi))))

    def check_dim(self, n: int) -> None:
        if len(self.lo) != n:
            raise ValueError(f"box has dimension {len(self.lo)}, block has {n}")

    def to_dict(self):
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class Diagonal:
    """``{(z, z)}`` inside a paired block ``(x_i, xhat_i)`` of even size."""

    def dist(self, v):
        v = np.asarray(v, dtype=float)
        n = v.shape[-1] // 2
        return np.linalg.norm(v[..., :n] - v[..., n:], axis=-1) / np.sqrt(2.0)

    def nearest(self, v):
        v = np.asarray(v, dtype=float)
        n = v.shape[-1] // 2
        mid = 0.5 * (v[..., :n] + v[..., n:])
        return np.concatenate([mid, mid], axis=-1)

    contains_zero = True

    def radius(self, n: int) -> float:
        return np.inf

    def check_dim(self, n: int) -> None:
        if n % 2:
            raise ValueError("diagonal set needs a paired block of even size")

    def to_dict(self):
        return {"kind": "diagonal"}


SetDescriptor = Union[Origin, Full, Point, Box, Diagonal]


def block_dist(x_i, A_i: SetDescriptor) -> float:
    """Exact Euclidean distance from one block to its set."""
    v = np.asarray(x_i, dtype=float)
    if v.ndim != 1:
        raise ValueError("block must be a 1-d vector")
    A_i.check_dim(v.shape[0])
    return float(A_i.dist(v))


@dataclass(frozen=True)
class SetSpec:
    """Product set ``A = X ∩ (A_1 x A_2 x ...)`` as prefix descriptors plus a tail descriptor.

    Only tails containing the origin are accepted; that makes ``A`` nonempty
    (pick the nearest points on the prefix and zero afterwards).
    """

    rule: BlockRule

    def __post_init__(self):
        if not self.rule.tail.contains_zero:
            raise EmptySetError(
                "tail descriptor excludes 0, so no selection has finite l^p norm"
            )

    @classmethod
    def make(cls, prefix: Sequence[SetDescriptor] = (), tail: SetDescriptor = Origin()) -> "SetSpec":
        return cls(BlockRule(tuple(prefix), tail))

    @classmethod
    def origin(cls) -> "SetSpec":
        return cls.make((), Origin())

    def __getitem__(self, i: int) -> SetDescriptor:
        return self.rule.at(i)

    @property
    def prefix_len(self) -> int:
        return self.rule.prefix_len

    def radius(self, dims: BlockDims, p: float) -> float:
        """``||A|| = sup_{a in A} |a|_p``; ``inf`` when some block set is unbounded."""
        p = _check_p(p)
        P = self.prefix_len
        if self.rule.tail.radius(dims[P]) > 0:
            return np.inf
        r = np.array([self[i].radius(dims[i]) for i in range(P)])
        if np.any(np.isinf(r)):
            return np.inf
        return float((r ** p).sum() ** (1.0 / p))

    def validate(self, dims: BlockDims, N: int) -> None:
        for i in range(max(N, self.prefix_len) + 1):
            self[i].check_dim(dims[i])

    def to_dict(self):
        return {"prefix": [d.to_dict() for d in self.rule.prefix], "tail": self.rule.tail.to_dict()}


# --------------------------------------------------------------------------
# truncated sequences


@dataclass(frozen=True)
class TruncSeq:
    """First ``N`` blocks of an element of ``l^p(N, (n_i))``; blocks beyond ``N`` are zero."""

    dims: BlockDims
    N: int
    data: np.ndarray
    p: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "p", _check_p(self.p))
        data = np.array(self.data, dtype=float).ravel()
        if data.shape[0] != self.dims.total(self.N):
            raise ValueError(
                f"expected {self.dims.total(self.N)} entries for {self.N} blocks, got {data.shape[0]}"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_blocks(cls, blocks: Sequence, p: float = 2.0, dims: BlockDims | None = None) -> "TruncSeq":
        blocks = [np.atleast_1d(np.asarray(b, dtype=float)) for b in blocks]
        if dims is None:
            sizes = [b.shape[0] for b in blocks]
            dims = BlockDims(tuple(sizes), sizes[-1] if sizes else 1)
        for i, b in enumerate(blocks):
            if b.shape != (dims[i],):
                raise ValueError(f"block {i} has shape {b.shape}, expected ({dims[i]},)")
        data = np.concatenate(blocks) if blocks else np.zeros(0)
        return cls(dims, len(blocks), data, p)

    @classmethod
    def zeros(cls, dims: BlockDims, N: int, p: float = 2.0) -> "TruncSeq":
        return cls(dims, N, np.zeros(dims.total(N)), p)

    @property
    def starts(self) -> np.ndarray:
        return self.dims.starts(self.N)

    def block(self, i: int) -> np.ndarray:
        if i >= self.N:
            return np.zeros(self.dims[i])
        s = self.starts
        return self.data[s[i]:s[i + 1]]

    @property
    def blocks(self) -> list[np.ndarray]:
        return [self.block(i) for i in range(self.N)]

    def extend(self, N2: int) -> "TruncSeq":
        """Same element with explicit zero blocks up to ``N2``."""
        if N2 < self.N:
            raise ValueError("extend cannot shorten a sequence")
        data = np.zeros(self.dims.total(N2))
        data[: self.data.shape[0]] = self.data
        return TruncSeq(self.dims, N2, data, self.p)

    def __sub__(self, other: "TruncSeq") -> "TruncSeq":
        _check_compatible(self, other)
        N = max(self.N, other.N)
        a, b = self.extend(N), other.extend(N)
        return TruncSeq(self.dims, N, a.data - b.data, self.p)


def _check_compatible(x: TruncSeq, y: TruncSeq) -> None:
    if x.p != y.p:
        raise ValueError("exponents differ")
    N = max(x.N, y.N)
    if not np.array_equal(x.dims.sizes(N), y.dims.sizes(N)):
        raise ValueError("block dimensions differ")


def block_norms(data: np.ndarray, dims: BlockDims, N: int) -> np.ndarray:
    """Euclidean norm of each of the ``N`` blocks; leading axes are kept."""
    data = np.asarray(data, dtype=float)
    starts = dims.starts(N)
    if N == 0:
        return np.zeros(data.shape[:-1] + (0,))
    sq = np.add.reduceat(data * data, starts[:-1], axis=-1)
    return np.sqrt(sq)


def _lp(values: np.ndarray, p: float) -> np.ndarray:
    if p == 1.0:
        return values.sum(axis=-1)
    if p == 2.0:
        return np.sqrt((values * values).sum(axis=-1))
    m = values.max(axis=-1, initial=0.0)
    safe = np.where(m > 0, m, 1.0)
    scaled = values / safe[..., None]
    return m * (scaled ** p).sum(axis=-1) ** (1.0 / p)


def lp_norm(x: TruncSeq) -> float:
    """``(sum_i |x_i|^p)^(1/p)`` over the explicit blocks."""
    return float(_lp(block_norms(x.data, x.dims, x.N), x.p))


def lp_norm_flat(data: np.ndarray, dims: BlockDims, N: int, p: float) -> np.ndarray:
    """Vectorized ``lp_norm`` over leading axes of a stack of flat states."""
    return _lp(block_norms(data, dims, N), _check_p(p))


def block_set_dists(data: np.ndarray, dims: BlockDims, N: int, A: SetSpec) -> np.ndarray:
    """Per-block distances ``|x_i|_{A_i}`` for ``i < max(N, len(prefix of A))``.

    Blocks at or beyond ``N`` hold zero state; their distances are included
    so that nonzero-point prefix sets are accounted for.
    """
    data = np.asarray(data, dtype=float)
    lead = data.shape[:-1]
    P = A.prefix_len
    M = max(N, P)
    starts = dims.starts(N)
    out = np.empty(lead + (M,))
    Pd = len(dims.prefix)
    # per-block loop over the irregular prefix, vectorized over the uniform tail
    k0 = min(max(P, Pd), N)
    for i in range(k0):
        A[i].check_dim(dims[i])
        out[..., i] = A[i].dist(data[..., starts[i]:starts[i + 1]])
    if N > k0:
        n = dims.tail
        A.rule.tail.check_dim(n)
        seg = data[..., starts[k0]:starts[N]].reshape(lead + (N - k0, n))
        out[..., k0:N] = A.rule.tail.dist(seg)
    for i in range(N, M):
        A[i].check_dim(dims[i])
        out[..., i] = A[i].dist(np.zeros(dims[i]))
    return out


def set_dist(x: TruncSeq, A: SetSpec) -> float:
    """Distance ``|x|_A = (sum_i |x_i|_{A_i}^p)^(1/p)`` to the product set."""
    return float(_lp(block_set_dists(x.data, x.dims, x.N, A), x.p))


def set_dist_flat(data: np.ndarray, dims: BlockDims, N: int, A: SetSpec, p: float) -> np.ndarray:
    return _lp(block_set_dists(data, dims, N, A), _check_p(p))


def nearest_point(x: TruncSeq, A: SetSpec) -> TruncSeq:
    """A minimizer of ``|x - a|_p`` over ``a in A``, blockwise."""
    M = max(x.N, A.prefix_len)
    xe = x.extend(M)
    blocks = [np.atleast_1d(A[i].nearest(xe.block(i))) for i in range(M)]
    return TruncSeq.from_blocks(blocks, x.p, x.dims)


def pair_dist_to_diagonal(x: TruncSeq, y: TruncSeq) -> float:
    """Distance of ``(x, y)`` to ``{(z, z)}`` in the norm ``sqrt(|x|_p^2 + |y|_p^2)``.

    Evaluated at the minimizer ``z = (x + y) / 2``; equals ``|x - y|_p / sqrt(2)``.
    """
    _check_compatible(x, y)
    N = max(x.N, y.N)
    xe, ye = x.extend(N), y.extend(N)
    z = 0.5 * (xe.data + ye.data)
    dx = lp_norm_flat(xe.data - z, x.dims, N, x.p)
    dy = lp_norm_flat(ye.data - z, x.dims, N, x.p)
    return float(np.hypot(dx, dy))


def pair_dist_to_diagonal_flat(xd, yd, dims: BlockDims, N: int, p: float) -> np.ndarray:
    z = 0.5 * (np.asarray(xd) + np.asarray(yd))
    return np.hypot(lp_norm_flat(xd - z, dims, N, p), lp_norm_flat(yd - z, dims, N, p))
