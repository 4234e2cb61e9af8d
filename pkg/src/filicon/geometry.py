"""Interval and box values used as set enclosures.

Convex velocity sets are carried as their axis-aligned box hulls.  Every
widening operation rounds outward so that enclosures stay sound under
floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Interval",
    "Box",
    "ValueEnclosure",
    "inflate",
    "hull",
    "contains",
    "distance",
]


def _down(x: float) -> float:
    return math.nextafter(x, -math.inf)


def _up(x: float) -> float:
    return math.nextafter(x, math.inf)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval bounds must not be NaN")
        if lo > hi:
            raise ValueError(f"empty interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> Interval:
        return cls(x, x)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def __iter__(self):
        yield self.lo
        yield self.hi

    def __repr__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"


@dataclass(frozen=True)
class Box:
    """Cartesian product of closed intervals; a point is a degenerate box."""

    intervals: tuple[Interval, ...]

    def __post_init__(self):
        ivs = tuple(iv if isinstance(iv, Interval) else Interval(*iv) for iv in self.intervals)
        if not ivs:
            raise ValueError("a box needs at least one axis")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float]) -> Box:
        # adding 0.0 turns -0.0 into 0.0
        lo = np.atleast_1d(np.asarray(lo, dtype=float)) + 0.0
        hi = np.atleast_1d(np.asarray(hi, dtype=float)) + 0.0
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same length")
        return cls(tuple(Interval(a, b) for a, b in zip(lo.tolist(), hi.tolist())))

    @classmethod
    def point(cls, x: Sequence[float] | float) -> Box:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls.from_bounds(x, x)

    @classmethod
    def parse(cls, pairs: Iterable[Sequence[float]]) -> Box:
        return cls(tuple(Interval(float(a), float(b)) for a, b in pairs))

    @property
    def dims(self) -> int:
        return len(self.intervals)

    @property
    def lo(self) -> np.ndarray:
        return np.array([iv.lo for iv in self.intervals])

    @property
    def hi(self) -> np.ndarray:
        return np.array([iv.hi for iv in self.intervals])

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains_point(self, x: Sequence[float]) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.all(self.lo <= x) and np.all(x <= self.hi))

    def intersect(self, other: Box) -> Box | None:
        _check_dims(self, other)
        lo = np.maximum(self.lo, other.lo)
        hi = np.minimum(self.hi, other.hi)
        if np.any(lo > hi):
            return None
        return Box.from_bounds(lo, hi)

    def as_pairs(self) -> list[list[float]]:
        return [[iv.lo, iv.hi] for iv in self.intervals]

    def __repr__(self) -> str:
        return "x".join(repr(iv) for iv in self.intervals)


@dataclass(frozen=True)
class ValueEnclosure:
    """Box hull of a set value; ``box is None`` encodes the empty set."""

    box: Box | None

    @classmethod
    def empty(cls) -> ValueEnclosure:
        return cls(None)

    @classmethod
    def from_bounds(cls, lo, hi) -> ValueEnclosure:
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if np.any(lo > hi):
            return cls(None)
        return cls(Box.from_bounds(lo, hi))

    @property
    def is_empty(self) -> bool:
        return self.box is None

    @property
    def lo(self) -> np.ndarray:
        return self.box.lo

    @property
    def hi(self) -> np.ndarray:
        return self.box.hi

    def __contains__(self, v) -> bool:
        return self.box is not None and self.box.contains_point(v)

    def __repr__(self) -> str:
        return "ValueEnclosure(empty)" if self.box is None else f"ValueEnclosure({self.box!r})"


def _check_dims(a: Box, b: Box) -> None:
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch: {a.dims} vs {b.dims}")


def inflate(b: Box, eps: float) -> Box:
    """Widen every axis of ``b`` by ``eps`` on both sides (outward rounded)."""
    if eps < 0 or math.isnan(eps):
        raise ValueError(f"inflation radius must be nonnegative, got {eps}")
    if eps == 0:
        return b
    return Box(tuple(Interval(_down(iv.lo - eps), _up(iv.hi + eps)) for iv in b.intervals))


def hull(values: Iterable[ValueEnclosure | Box]) -> ValueEnclosure:
    boxes = []
    for v in values:
        box = v.box if isinstance(v, ValueEnclosure) else v
        if box is not None:
            boxes.append(box)
    if not boxes:
        return ValueEnclosure.empty()
    for b in boxes[1:]:
        _check_dims(boxes[0], b)
    lo = np.min([b.lo for b in boxes], axis=0)
    hi = np.max([b.hi for b in boxes], axis=0)
    return ValueEnclosure(Box.from_bounds(lo, hi))


def contains(outer: Box, inner: Box) -> bool:
    _check_dims(outer, inner)
    return bool(np.all(outer.lo <= inner.lo) and np.all(inner.hi <= outer.hi))


def distance(a: Box, b: Box) -> float:
    """Smallest ``eps`` with ``b`` inside ``inflate(a, eps)`` (sup-norm)."""
    _check_dims(a, b)
    gap = float(max(0.0, np.max(np.maximum(a.lo - b.lo, b.hi - a.hi))))
    # the subtraction rounds; nudge up until the inflated box really contains b
    while gap > 0 and not contains(inflate(a, gap), b):
        gap = math.nextafter(gap, math.inf)
    return gap
