"""Outward-rounded interval arithmetic over numpy arrays.

Every operation works elementwise, so a single ``Interval`` can carry the
ranges of many boxes at once (one entry per simplex, for instance).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class IntervalDomainError(ArithmeticError):
    """An operation left its domain (division by an interval containing 0, sqrt of negatives)."""


def _down(a):
    return np.nextafter(a, -np.inf)


def _up(a):
    return np.nextafter(a, np.inf)


@dataclass(frozen=True)
class Interval:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise IntervalDomainError("interval with NaN endpoint")
        if np.any(lo > hi):
            raise ValueError("interval with lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, value) -> "Interval":
        v = np.asarray(value, dtype=float)
        return cls(v, v)

    def mag(self) -> np.ndarray:
        """Largest absolute value in the interval."""
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (self.lo <= x) & (x <= self.hi)

    def __add__(self, other):
        other = _as_interval(other)
        return Interval(_down(self.lo + other.lo), _up(self.hi + other.hi))

    __radd__ = __add__

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other):
        other = _as_interval(other)
        return Interval(_down(self.lo - other.hi), _up(self.hi - other.lo))

    def __rsub__(self, other):
        return _as_interval(other) - self

    def __mul__(self, other):
        other = _as_interval(other)
        with np.errstate(invalid="ignore"):
            prods = np.stack([self.lo * other.lo, self.lo * other.hi,
                              self.hi * other.lo, self.hi * other.hi])
        # 0 * inf shows up as NaN; the true product range there includes 0 only.
        prods = np.where(np.isnan(prods), 0.0, prods)
        return Interval(_down(prods.min(axis=0)), _up(prods.max(axis=0)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_interval(other)
        if np.any((other.lo <= 0.0) & (other.hi >= 0.0)):
            raise IntervalDomainError("division by an interval containing 0")
        recip = Interval(_down(1.0 / other.hi), _up(1.0 / other.lo))
        return self * recip

    def __rtruediv__(self, other):
        return _as_interval(other) / self

    def __pow__(self, k: int):
        if int(k) != k or k < 0:
            raise ValueError("only nonnegative integer powers are supported")
        k = int(k)
        if k == 0:
            return Interval.point(np.ones_like(self.lo))
        if k == 1:
            return self
        plo = self.lo ** k
        phi = self.hi ** k
        if k % 2 == 1:
            return Interval(_down(plo), _up(phi))
        lo = np.where(self.lo >= 0, plo, np.where(self.hi <= 0, phi, 0.0))
        hi = np.where(self.lo >= 0, phi, np.where(self.hi <= 0, plo, np.maximum(plo, phi)))
        straddles = (self.lo < 0) & (self.hi > 0)
        return Interval(np.where(straddles, 0.0, _down(lo)), _up(hi))

    def __repr__(self):
        return f"Interval({self.lo!r}, {self.hi!r})"


def _as_interval(x) -> Interval:
    return x if isinstance(x, Interval) else Interval.point(x)


def _monotone(iv: Interval, fn) -> Interval:
    return Interval(_down(fn(iv.lo)), _up(fn(iv.hi)))


def _periodic(iv: Interval, fn, peak_phase: float, trough_phase: float) -> Interval:
    """Range of a 2*pi-periodic function with one peak (+1) and one trough (-1) per period."""
    lo, hi = iv.lo, iv.hi
    two_pi = 2.0 * math.pi
    slack = 8.0 * np.finfo(float).eps * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
    a, b = lo - slack, hi + slack

    def hits(phase):
        return np.ceil((a - phase) / two_pi) <= np.floor((b - phase) / two_pi)

    fa, fb = fn(lo), fn(hi)
    out_hi = np.where(hits(peak_phase), 1.0, _up(np.maximum(fa, fb)))
    out_lo = np.where(hits(trough_phase), -1.0, _down(np.minimum(fa, fb)))
    wide = (hi - lo) >= two_pi
    out_hi = np.where(wide, 1.0, np.minimum(out_hi, 1.0))
    out_lo = np.where(wide, -1.0, np.maximum(out_lo, -1.0))
    return Interval(out_lo, out_hi)


def sin(iv: Interval) -> Interval:
    return _periodic(iv, np.sin, 0.5 * math.pi, -0.5 * math.pi)


def cos(iv: Interval) -> Interval:
    return _periodic(iv, np.cos, 0.0, math.pi)


def exp(iv: Interval) -> Interval:
    out = _monotone(iv, np.exp)
    return Interval(np.maximum(out.lo, 0.0), out.hi)


def tanh(iv: Interval) -> Interval:
    out = _monotone(iv, np.tanh)
    return Interval(np.maximum(out.lo, -1.0), np.minimum(out.hi, 1.0))


def sqrt(iv: Interval) -> Interval:
    if np.any(iv.lo < 0.0):
        raise IntervalDomainError("sqrt of an interval reaching below 0")
    out = _monotone(iv, np.sqrt)
    return Interval(np.maximum(out.lo, 0.0), out.hi)


def abs_(iv: Interval) -> Interval:
    lo = np.where(iv.lo >= 0, iv.lo, np.where(iv.hi <= 0, -iv.hi, 0.0))
    hi = np.maximum(-iv.lo, iv.hi)
    return Interval(lo, hi)


def sign(iv: Interval) -> Interval:
    return Interval(np.sign(iv.lo), np.sign(iv.hi))
