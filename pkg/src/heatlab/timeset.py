"""Time sets of positive measure and the geometric time sequence that
accumulates at a density point of such a set."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TimeSet:
    """Finite union of disjoint open intervals inside ``(0, T)``."""

    T: float
    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        ivs = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
        for a, b in ivs:
            if not (0.0 <= a < b <= self.T):
                raise ValueError(f"interval ({a}, {b}) must satisfy 0 <= a < b <= T={self.T}")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if a1 < b0:
                raise ValueError("intervals must be disjoint")
        if not ivs:
            raise ValueError("time set must have positive measure")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def full(cls, T: float) -> "TimeSet":
        return cls(T, ((0.0, T),))

    @classmethod
    def from_pairs(cls, T: float, pairs) -> "TimeSet":
        return cls(T, tuple((a, b) for a, b in pairs))

    def to_pairs(self) -> list[list[float]]:
        return [[a, b] for a, b in self.intervals]


def measure(E: TimeSet) -> float:
    return sum(b - a for a, b in E.intervals)


def intersect_measure(E: TimeSet, a: float, b: float) -> float:
    """``|E ∩ (a, b)|`` by clipping each component."""
    if not a < b:
        raise ValueError("need a < b")
    total = 0.0
    for lo, hi in E.intervals:
        lo, hi = max(lo, a), min(hi, b)
        if hi > lo:
            total += hi - lo
    return total


def active_step_mask(E: TimeSet, K: int) -> np.ndarray:
    """Step ``k`` covers ``[k tau, (k+1) tau)``; it is active iff its midpoint is in E."""
    if K < 1:
        raise ValueError("K must be >= 1")
    mid = (np.arange(K) + 0.5) * (E.T / K)
    active = np.zeros(K, dtype=bool)
    for a, b in E.intervals:
        active |= (mid > a) & (mid < b)
    return active


def choose_density_anchor(E: TimeSet) -> tuple[float, float]:
    """Left end of the longest component and the point 90% along it.

    Ties go to the earlier component.  The returned ``(l, l1)`` lies inside E,
    so every gap of a sequence built on it is entirely covered by E.
    """
    if not E.intervals:
        raise ValueError("time set has no component")
    a, b = max(E.intervals, key=lambda iv: (iv[1] - iv[0], -iv[0]))
    return a, a + 0.9 * (b - a)


@dataclass(frozen=True)
class TelescopeSequence:
    anchor: float
    l1: float
    ratio: float
    terms: np.ndarray = field(repr=False)
    gaps: np.ndarray = field(repr=False)
    covered: np.ndarray = field(repr=False)  # |E ∩ (l_{m+1}, l_m)|
    passed: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return bool(self.passed.all())

    @property
    def violations(self) -> list[int]:
        """1-based ``m`` of every pair ``(l_m, l_{m+1})`` that fails."""
        return [int(m) + 1 for m in np.flatnonzero(~self.passed)]


def build_telescope(E: TimeSet, l: float, l1: float, ratio: float, M: int) -> TelescopeSequence:
    """Terms ``l_m = l + ratio**-(m-1) (l1 - l)`` for ``m = 1..M`` and the
    check ``l_m - l_{m+1} <= 3 |E ∩ (l_{m+1}, l_m)|`` on each consecutive pair."""
    if not l < l1 < E.T:
        raise ValueError("need l < l1 < T")
    if not ratio > 1:
        raise ValueError("ratio must exceed 1")
    if M < 2:
        raise ValueError("need at least two terms")
    terms = np.array([l + (l1 - l) / ratio ** (m - 1) for m in range(1, M + 1)])
    gaps = terms[:-1] - terms[1:]
    covered = np.array([intersect_measure(E, lo, hi) for hi, lo in zip(terms[:-1], terms[1:])])
    return TelescopeSequence(l, l1, ratio, terms, gaps, covered, gaps <= 3.0 * covered)
