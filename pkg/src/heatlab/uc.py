"""Frequency function and interpolation-exponent diagnostics.

The frequency of ``u(., t)`` on ``B_r(x0) ∩ Ω`` is the Gaussian-weighted
ratio of Dirichlet energy to mass, with weight

    G(x, t) = (T - t + lam)^(-N/2) exp(-|x - x0|^2 / (4 (T - t + lam))).

Gradients are centred differences with zero Dirichlet ghosts; quadrature is
``h^N`` times the nodal sum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import NodeMask, SpatialGrid, ball_mask, cube_mask


class UndefinedFrequency(ValueError):
    """Zero mass on the ball: the frequency is undefined at this level."""


@dataclass(frozen=True)
class FrequencyParams:
    x0: tuple[float, ...]
    r: float
    lam: float
    T: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.r > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))


def gaussian_weight(grid: SpatialGrid, p: FrequencyParams, t: float) -> np.ndarray:
    s = p.T - t + p.lam
    d2 = np.sum((grid.coords - np.asarray(p.x0)) ** 2, axis=1)
    return s ** (-grid.dim / 2) * np.exp(-d2 / (4 * s))


def centered_gradient_sq(u: np.ndarray, grid: SpatialGrid) -> np.ndarray:
    """``|∇_h u|^2`` at every interior node."""
    arr = np.pad(np.asarray(u, dtype=float).reshape(grid.shape), 1)
    out = np.zeros(grid.shape)
    for d in range(grid.dim):
        hi = [slice(1, -1)] * grid.dim
        lo = [slice(1, -1)] * grid.dim
        hi[d] = slice(2, None)
        lo[d] = slice(None, -2)
        out += ((arr[tuple(hi)] - arr[tuple(lo)]) / (2 * grid.h)) ** 2
    return out.ravel()


def frequency_function(u: np.ndarray, grid: SpatialGrid, p: FrequencyParams, t: float) -> float:
    """Frequency of the single level ``u`` observed at time ``t``."""
    ball = ball_mask(grid, p.x0, p.r)
    u = np.asarray(u, dtype=float)
    G = gaussian_weight(grid, p, t)
    mass = float(np.sum((u * u * G)[ball]))
    if not mass > 0:
        raise UndefinedFrequency(f"zero mass on B_r(x0) at t={t}")
    energy = float(np.sum((centered_gradient_sq(u, grid) * G)[ball]))
    return energy / mass


@dataclass
class MonotonicityReport:
    times: np.ndarray = field(repr=False)
    frequency: np.ndarray = field(repr=False)      # nan where undefined
    derivative: np.ndarray = field(repr=False)     # (N_{k+1} - N_k) / tau
    bound: np.ndarray = field(repr=False)          # N_k/(T - t_k + lam) + source quotient
    violation: np.ndarray = field(repr=False)      # max(0, derivative - bound)
    tolerance: float
    skipped: list[int]

    @property
    def max_violation(self) -> float:
        v = self.violation[np.isfinite(self.violation)]
        return float(v.max()) if v.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance

    @property
    def all_undefined(self) -> bool:
        return bool(np.all(np.isnan(self.frequency)))


# tol(h, tau) = MONOTONICITY_C (h + tau) / lam, frozen after the eigenfunction run
MONOTONICITY_C = 1.0


def frequency_monotonicity_check(u: np.ndarray, grid: SpatialGrid, p: FrequencyParams,
                                 potential: np.ndarray | None = None) -> MonotonicityReport:
    """Check ``dN/dt <= N/(T - t + lam) + ∫|a u|^2 G / ∫|u|^2 G`` level by level.

    ``u`` holds ``K + 1`` levels on ``[0, p.T]``; ``potential`` (shape
    ``(K, n)``) is the ``a`` of ``u_t - Δu + a u = 0`` when nonzero.
    """
    u = np.asarray(u, dtype=float)
    K = u.shape[0] - 1
    tau = p.T / K
    times = np.arange(K + 1) * tau
    ball = ball_mask(grid, p.x0, p.r)
    freq = np.full(K + 1, np.nan)
    src = np.zeros(K + 1)
    for k in range(K + 1):
        try:
            freq[k] = frequency_function(u[k], grid, p, times[k])
        except UndefinedFrequency:
            continue
        if potential is not None:
            a = potential[min(k, K - 1)]
            G = gaussian_weight(grid, p, times[k])
            src[k] = np.sum((a * a * u[k] * u[k] * G)[ball]) / np.sum((u[k] * u[k] * G)[ball])
    deriv = (freq[1:] - freq[:-1]) / tau
    bound = freq[:-1] / (p.T - times[:-1] + p.lam) + src[:-1]
    viol = np.maximum(0.0, deriv - bound)
    skipped = [int(k) for k in np.flatnonzero(np.isnan(deriv))]
    tol = MONOTONICITY_C * (grid.h + tau) / p.lam
    return MonotonicityReport(times, freq, deriv, bound, viol, tol, skipped)


@dataclass
class InterpolationReport:
    lhs: float
    mid: float
    small: float
    exponent: float | None
    r: float
    R: float
    delta: float
    R0: float
    degenerate: bool = False


def _implied_exponent(lhs: float, big: float, small: float) -> float | None:
    # lhs = big^g small^(1-g)  ->  g = log(lhs/small) / log(big/small)
    if not (lhs > 0 and big > 0 and small > 0) or big == small:
        return None
    return math.log(lhs / small) / math.log(big / small)


def interpolation_report(phi_T: np.ndarray, phi_late: np.ndarray, grid: SpatialGrid, x0, r: float, R: float,
                         delta: float, T: float) -> InterpolationReport:
    """Local three-integral report around ``x0``.

    ``phi_late`` holds the levels of the solution on ``[T/2, T]`` (first row
    at ``T/2``); the middle integral uses the right-endpoint rule over the
    cube of half-side ``2 R0``, ``R0 = (1 + 2 delta) R``.
    """
    if not 0 < r <= R:
        raise ValueError("need 0 < r <= R")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    dv = grid.cell_volume
    phi_T = np.asarray(phi_T, dtype=float)
    late = np.asarray(phi_late, dtype=float)
    R0 = (1 + 2 * delta) * R
    lhs = float(np.sum(phi_T[ball_mask(grid, x0, R)] ** 2)) * dv
    small = float(np.sum(phi_T[ball_mask(grid, x0, r)] ** 2)) * dv
    steps = late.shape[0] - 1
    cube = cube_mask(grid, x0, 2 * R0)
    mid = float(np.sum(late[1:, cube] ** 2)) * dv * (T / 2) / steps if steps > 0 else 0.0
    degenerate = r >= R
    gamma = None if degenerate else _implied_exponent(lhs, mid, 2 * small)
    return InterpolationReport(lhs, mid, small, gamma, r, R, delta, R0, degenerate)


@dataclass
class GlobalInterpolationReport:
    final: float      # ∫_Ω |phi(T)|^2
    initial: float    # ∫_Ω |phi_0|^2
    observed: float   # ∫_{ω∩Ω} |phi(T)|^2
    theta: float | None


def global_interpolation_report(phi0: np.ndarray, phi_T: np.ndarray, grid: SpatialGrid, mask: NodeMask,
                                constant: float = 1.0) -> GlobalInterpolationReport:
    """Exponent ``theta`` with ``final = constant * initial^theta * observed^(1-theta)``."""
    dv = grid.cell_volume
    final = float(np.sum(np.asarray(phi_T) ** 2)) * dv
    initial = float(np.sum(np.asarray(phi0) ** 2)) * dv
    observed = float(np.sum(mask.weights * np.asarray(phi_T) ** 2)) * dv
    theta = _implied_exponent(final / constant, initial, observed)
    return GlobalInterpolationReport(final, initial, observed, theta)
