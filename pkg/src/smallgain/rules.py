"""Finite descriptions of infinite index sequences.

Every infinite object in the package (block dimensions, decay rates, weights,
per-block subsystems) is a finite explicit prefix followed by a tail rule that
is defined for all remaining indices.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Generic, Sequence, TypeVar

import numpy as np

T = TypeVar("T")


@dataclass(frozen=True)
class ScalarSeq:
    """Real sequence ``i -> value`` with a constant or geometric tail.

    For ``i < len(prefix)`` the value is ``prefix[i]``; beyond that it is
    ``tail * ratio**(i - len(prefix))``. ``ratio == 1`` gives a constant tail.
    ``offset`` shifts the argument, and negative arguments evaluate to 0 so a
    shifted sequence can express "no such index".
    """

    prefix: tuple[float, ...] = ()
    tail: float = 0.0
    ratio: float = 1.0
    offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(float(v) for v in self.prefix))
        if not np.isfinite(self.tail) or not all(np.isfinite(self.prefix)):
            raise ValueError("sequence values must be finite")
        if not (0.0 < self.ratio <= 1.0):
            raise ValueError(f"tail ratio must lie in (0, 1], got {self.ratio}")

    @classmethod
    def const(cls, value: float) -> "ScalarSeq":
        return cls((), float(value))

    @classmethod
    def coerce(cls, value: "ScalarSeq | float | Sequence[float]") -> "ScalarSeq":
        if isinstance(value, ScalarSeq):
            return value
        if np.isscalar(value):
            return cls.const(float(value))
        vals = tuple(float(v) for v in value)
        return cls(vals, vals[-1] if vals else 0.0)

    @property
    def geometric(self) -> bool:
        return self.ratio < 1.0

    def at(self, idx):
        """Evaluate at integer index or integer array."""
        i = np.asarray(idx, dtype=np.int64) + self.offset
        P = len(self.prefix)
        out = np.zeros(i.shape, dtype=float)
        pre = (i >= 0) & (i < P)
        if P:
            out[pre] = np.asarray(self.prefix)[i[pre]]
        tl = i >= P
        out[tl] = self.tail * self.ratio ** (i[tl] - P)
        if np.ndim(idx) == 0:
            return float(out)
        return out

    def __call__(self, idx):
        return self.at(idx)

    def shift(self, k: int) -> "ScalarSeq":
        return ScalarSeq(self.prefix, self.tail, self.ratio, self.offset + k)

    def scaled(self, c: float) -> "ScalarSeq":
        return ScalarSeq(tuple(c * v for v in self.prefix), c * self.tail, self.ratio, self.offset)

    def reciprocal(self) -> "ReciprocalSeq":
        """Elementwise ``1/value`` (zeros stay zero); may grow without bound."""
        return ReciprocalSeq(self)

    def _values_from(self, start: int) -> tuple[np.ndarray, float, float]:
        # values at indices start..P-1 (explicit) and the tail parameters
        P = len(self.prefix)
        lo = start + self.offset
        explicit = np.asarray(self.prefix[max(lo, 0):], dtype=float)
        if lo < 0:
            explicit = np.concatenate([np.zeros(-lo), np.asarray(self.prefix, dtype=float)])
        tail0 = self.tail * self.ratio ** max(0, lo - P)
        return explicit, tail0, self.ratio

    def sup(self, start: int = 0) -> float:
        explicit, t0, _ = self._values_from(start)
        cands = [t0] + list(explicit)
        return float(max(cands))

    def inf(self, start: int = 0) -> float:
        """Infimum over ``i >= start``; a geometric tail has infimum 0."""
        explicit, t0, r = self._values_from(start)
        tail_inf = min(0.0, t0) if r < 1.0 else t0
        return float(min([tail_inf] + list(explicit)))

    def total(self, start: int = 0) -> float:
        """Sum over ``i >= start`` (``inf`` for a nonzero constant tail)."""
        explicit, t0, r = self._values_from(start)
        if r == 1.0:
            tail_sum = 0.0 if t0 == 0 else np.inf * np.sign(t0)
        else:
            tail_sum = t0 / (1.0 - r)
        return float(explicit.sum() + tail_sum)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"prefix": list(self.prefix), "tail": self.tail}
        if self.ratio != 1.0:
            d["ratio"] = self.ratio
        if self.offset:
            d["offset"] = self.offset
        return d


@dataclass(frozen=True)
class ReciprocalSeq:
    base: ScalarSeq

    def at(self, idx):
        v = np.asarray(self.base.at(idx), dtype=float)
        out = np.divide(1.0, v, out=np.zeros_like(v), where=v != 0)
        return float(out) if out.ndim == 0 else out

    def __call__(self, idx):
        return self.at(idx)

    def shift(self, k: int) -> "ReciprocalSeq":
        return ReciprocalSeq(self.base.shift(k))


@dataclass(frozen=True)
class BlockRule(Generic[T]):
    """Per-block objects: explicit prefix then one object repeated forever."""

    prefix: tuple = ()
    tail: Any = None

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(self.prefix))
        if self.tail is None:
            raise ValueError("a tail rule is required so the sequence is total")

    def at(self, i: int) -> T:
        if i < 0:
            raise IndexError(i)
        return self.prefix[i] if i < len(self.prefix) else self.tail

    def __getitem__(self, i: int) -> T:
        return self.at(i)

    @property
    def prefix_len(self) -> int:
        return len(self.prefix)

    def groups(self, N: int) -> list[tuple[T, np.ndarray]]:
        """Partition ``0..N-1`` into (object, indices): each prefix block alone, the tail together."""
        out = [(self.prefix[i], np.array([i])) for i in range(min(N, len(self.prefix)))]
        if N > len(self.prefix):
            out.append((self.tail, np.arange(len(self.prefix), N)))
        return out

    def map(self, fn) -> "BlockRule":
        return BlockRule(tuple(fn(v) for v in self.prefix), fn(self.tail))


@dataclass(frozen=True)
class BlockDims:
    """Block sizes ``n_i``: explicit list plus a constant tail size."""

    prefix: tuple[int, ...] = ()
    tail: int = 1

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(int(v) for v in self.prefix))
        if any(n < 1 for n in self.prefix) or int(self.tail) < 1:
            raise ValueError("every block dimension must be >= 1")
        object.__setattr__(self, "tail", int(self.tail))

    @classmethod
    def uniform(cls, n: int) -> "BlockDims":
        return cls((), n)

    @classmethod
    def coerce(cls, value) -> "BlockDims":
        if isinstance(value, BlockDims):
            return value
        if isinstance(value, (int, np.integer)):
            return cls.uniform(int(value))
        vals = tuple(int(v) for v in value)
        return cls(vals, vals[-1])

    def __getitem__(self, i: int) -> int:
        return self.prefix[i] if i < len(self.prefix) else self.tail

    def sizes(self, N: int) -> np.ndarray:
        return np.array([self[i] for i in range(N)], dtype=np.int64)

    def starts(self, N: int) -> np.ndarray:
        """Offsets of the ``N + 1`` block boundaries inside a flat vector."""
        return np.concatenate([[0], np.cumsum(self.sizes(N))]).astype(np.int64)

    def total(self, N: int) -> int:
        return int(self.sizes(N).sum())

    def prepend(self, n0: int) -> "BlockDims":
        P = max(len(self.prefix), 0)
        return BlockDims((n0,) + tuple(self[i] for i in range(P)), self.tail)

    def to_dict(self) -> dict:
        return {"prefix": list(self.prefix), "tail": self.tail}


def as_index_array(idx) -> np.ndarray:
    return np.atleast_1d(np.asarray(idx, dtype=np.int64))


__all__ = ["ScalarSeq", "ReciprocalSeq", "BlockRule", "BlockDims"]
