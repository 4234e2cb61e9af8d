"""Array-valued interval arithmetic with outward rounding.

An :class:`IA` holds broadcastable ``lo``/``hi`` arrays, so one expression
evaluation encloses a function over many boxes at once.  Basic arithmetic
rounds each bound one ulp outward (IEEE operations are correctly rounded);
library transcendentals get a fixed absolute slack instead.

Unbounded operands are allowed: division by an interval containing zero
returns the whole line, and ``0 * inf`` is taken as 0 so that bounded
functions such as ``tanh`` still produce finite enclosures.
"""

from __future__ import annotations

import math

import numpy as np

SLACK = 1e-12
INV_E = math.exp(-1.0)

_INF = np.inf


def _down(x):
    return np.nextafter(x, -_INF)


def _up(x):
    return np.nextafter(x, _INF)


def _clean(lo, hi):
    lo = np.where(np.isnan(lo), -_INF, lo)
    hi = np.where(np.isnan(hi), _INF, hi)
    return lo, hi


def _mul0(a, b):
    with np.errstate(invalid="ignore"):
        p = a * b
    return np.where(np.isnan(p), 0.0, p)


class IA:
    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi=None):
        lo = np.asarray(lo, dtype=float)
        hi = lo if hi is None else np.asarray(hi, dtype=float)
        self.lo = lo
        self.hi = hi

    @classmethod
    def const(cls, c: float) -> IA:
        return cls(np.float64(c))

    def __repr__(self):
        return f"IA({self.lo!r}, {self.hi!r})"

    def contains_zero(self):
        return (self.lo <= 0.0) & (self.hi >= 0.0)

    def __add__(self, other: IA) -> IA:
        with np.errstate(invalid="ignore"):
            return IA(*_clean(_down(self.lo + other.lo), _up(self.hi + other.hi)))

    def __sub__(self, other: IA) -> IA:
        with np.errstate(invalid="ignore"):
            return IA(*_clean(_down(self.lo - other.hi), _up(self.hi - other.lo)))

    def __neg__(self) -> IA:
        return IA(-self.hi, -self.lo)

    def __mul__(self, other: IA) -> IA:
        p = [_mul0(a, b) for a in (self.lo, self.hi) for b in (other.lo, other.hi)]
        lo = np.minimum(np.minimum(p[0], p[1]), np.minimum(p[2], p[3]))
        hi = np.maximum(np.maximum(p[0], p[1]), np.maximum(p[2], p[3]))
        return IA(_down(lo), _up(hi))

    def __truediv__(self, other: IA) -> IA:
        zero = other.contains_zero()
        with np.errstate(divide="ignore", invalid="ignore"):
            q = [a / b for a in (self.lo, self.hi) for b in (other.lo, other.hi)]
        lo = np.minimum(np.minimum(q[0], q[1]), np.minimum(q[2], q[3]))
        hi = np.maximum(np.maximum(q[0], q[1]), np.maximum(q[2], q[3]))
        lo, hi = _clean(_down(lo), _up(hi))
        return IA(np.where(zero, -_INF, lo), np.where(zero, _INF, hi))

    def __pow__(self, n: int) -> IA:
        if n == 0:
            return IA(np.ones_like(self.lo + self.hi))
        if n < 0:
            return IA.const(1.0) / (self ** (-n))
        with np.errstate(over="ignore"):
            a, b = self.lo**n, self.hi**n
        if n % 2:
            return IA(_down(a), _up(b))
        zero = self.contains_zero()
        lo = np.where(zero, 0.0, np.minimum(a, b))
        hi = np.maximum(a, b)
        return IA(np.maximum(_down(lo), 0.0), _up(hi))


def _slack(lo, hi):
    return lo - SLACK, hi + SLACK


def tanh(x: IA) -> IA:
    lo, hi = _slack(np.tanh(x.lo), np.tanh(x.hi))
    return IA(np.maximum(lo, -1.0), np.minimum(hi, 1.0))


def exp(x: IA) -> IA:
    with np.errstate(over="ignore"):
        lo, hi = _slack(np.exp(x.lo), np.exp(x.hi))
    return IA(np.maximum(lo, 0.0), hi)


def sqrt(x: IA) -> IA:
    lo = np.sqrt(np.maximum(x.lo, 0.0))
    with np.errstate(invalid="ignore"):
        hi = np.sqrt(x.hi)
    lo, hi = _slack(lo, hi)
    return IA(*_clean(np.maximum(lo, 0.0), hi))


def absolute(x: IA) -> IA:
    a, b = np.abs(x.lo), np.abs(x.hi)
    lo = np.where(x.contains_zero(), 0.0, np.minimum(a, b))
    return IA(lo, np.maximum(a, b))


def minimum(x: IA, y: IA) -> IA:
    return IA(np.minimum(x.lo, y.lo), np.minimum(x.hi, y.hi))


def maximum(x: IA, y: IA) -> IA:
    return IA(np.maximum(x.lo, y.lo), np.maximum(x.hi, y.hi))


def _sin(x: IA) -> IA:
    lo, hi = x.lo, x.hi
    with np.errstate(invalid="ignore"):
        a, b = np.sin(lo), np.sin(hi)
        wide = ~np.isfinite(lo) | ~np.isfinite(hi) | (hi - lo >= 2 * np.pi)
        k_max = np.ceil((lo - np.pi / 2) / (2 * np.pi))
        k_min = np.ceil((lo + np.pi / 2) / (2 * np.pi))
        has_max = np.pi / 2 + 2 * np.pi * k_max <= hi
        has_min = -np.pi / 2 + 2 * np.pi * k_min <= hi
    out_lo = np.where(has_min | wide, -1.0, np.minimum(a, b))
    out_hi = np.where(has_max | wide, 1.0, np.maximum(a, b))
    out_lo, out_hi = _slack(out_lo, out_hi)
    return IA(np.maximum(out_lo, -1.0), np.minimum(out_hi, 1.0))


def sin(x: IA) -> IA:
    return _sin(x)


def cos(x: IA) -> IA:
    # cos(x) = sin(x + pi/2); the shift is widened to keep the enclosure sound
    shift = IA(_down(np.pi / 2), _up(np.pi / 2))
    return _sin(x + shift)


def mollifier_point(x):
    """exp(-1/(1-x^2)) on |x| < 1, zero elsewhere (vectorised)."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        val = np.exp(-1.0 / (1.0 - x * x))
    return np.where(inside, val, 0.0)


def mollifier(x: IA) -> IA:
    # even bump, decreasing in |x|: max at the point nearest 0, min at the farthest
    a, b = np.abs(x.lo), np.abs(x.hi)
    near = np.where(x.contains_zero(), 0.0, np.minimum(a, b))
    far = np.maximum(a, b)
    lo, hi = _slack(mollifier_point(far), mollifier_point(near))
    return IA(np.maximum(lo, 0.0), hi)
