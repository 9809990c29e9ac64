"""Theory-shaped constants: the one-step interpolation bound and the
telescoped observability constant built on a density anchor of E.

Everything is evaluated in logarithms; the universal constants are inputs
with defaults ``C = C3 = 1``, ``theta = 1/2``, ``C_tilde = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .timeset import TimeSet, choose_density_anchor

# series truncation: stop once a term is below this fraction of the partial sum
SERIES_CUTOFF = 1e-300
_LOG_CUTOFF = math.log(SERIES_CUTOFF)


def kappa_alpha(theta: float) -> tuple[float, float]:
    """``alpha = theta / (1 - theta)`` and ``kappa = sqrt((alpha + 2) / (alpha + 1))``."""
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    alpha = theta / (1 - theta)
    return alpha, math.sqrt((alpha + 2) / (alpha + 1))


@dataclass(frozen=True)
class BoundConstants:
    theta: float = 0.5
    C3: float = 1.0
    C: float = 1.0
    C_tilde: float = 0.0

    def __post_init__(self):
        kappa_alpha(self.theta)
        if not self.C3 > 0:
            raise ValueError("C3 must be positive")
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.C_tilde >= 0:
            raise ValueError("C_tilde must be nonnegative")

    @property
    def alpha(self) -> float:
        return kappa_alpha(self.theta)[0]

    @property
    def kappa(self) -> float:
        return kappa_alpha(self.theta)[1]

    def log_K1(self, T: float, a_norm: float) -> float:
        return self.C3 * (T + T * a_norm + a_norm ** (2 / 3)) / (1 - self.theta)

    @property
    def K2(self) -> float:
        return self.C3 / (1 - self.theta)

    def log_K3(self, T: float, a_norm: float) -> float:
        return 2 * T * a_norm * (1 + self.alpha) + self.log_K1(T, a_norm)


def log_interpolation_bound(T: float, a_norm: float, C3: float = 1.0) -> float:
    if not T > 0:
        raise ValueError("T must be positive")
    if a_norm < 0:
        raise ValueError("a_norm must be nonnegative")
    return C3 * (1 / T + T + T * a_norm + a_norm ** (2 / 3))


def interpolation_bound(T: float, a_norm: float, C3: float = 1.0, theta: float = 0.5) -> float:
    """``exp(C3 (1/T + T + T a + a^(2/3)))``; ``theta`` only enters the exponent split."""
    kappa_alpha(theta)
    return math.exp(log_interpolation_bound(T, a_norm, C3))


@dataclass
class AssembledBound:
    log_constant: float
    l: float
    l1: float
    alpha: float
    kappa: float
    d: float
    log_K1: float
    K2: float
    log_K3: float
    log_series: float
    terms: int

    @property
    def constant(self) -> float:
        return math.exp(self.log_constant) if self.log_constant < 709 else math.inf

    @property
    def K1(self) -> float:
        return math.exp(self.log_K1) if self.log_K1 < 709 else math.inf

    @property
    def K3(self) -> float:
        return math.exp(self.log_K3) if self.log_K3 < 709 else math.inf

    def rows(self) -> list[tuple[str, float]]:
        return [("l", self.l), ("l1", self.l1), ("alpha", self.alpha), ("kappa", self.kappa), ("d", self.d),
                ("K1", self.K1), ("K2", self.K2), ("K3", self.K3), ("log_constant", self.log_constant),
                ("constant", self.constant)]


def _log_series(c: float, kappa: float, max_terms: int = 10_000) -> tuple[float, int]:
    # log of sum_{m>=1} (w_{2m} - w_{2m+2}),  w_j = exp(-c kappa^j)
    total = -math.inf
    m = 0
    for m in range(1, max_terms + 1):
        a = c * kappa ** (2 * m)
        b = c * kappa ** (2 * m + 2)
        if not math.isfinite(b):
            break
        log_term = -a + math.log(-math.expm1(a - b))
        if total > -math.inf and log_term < total + _LOG_CUTOFF:
            break
        total = np.logaddexp(total, log_term)
    return float(total), m


def assemble_observability_constant(E: TimeSet, T: float | None = None, a_norm: float = 0.0,
                                    consts: BoundConstants | None = None) -> AssembledBound:
    """Telescoped constant ``e^{C_tilde} e^{2 T a} (3 / kappa) (K3 / K2) / S``.

    ``S`` sums ``exp(-(2+alpha) d kappa^{2m}) - exp(-(2+alpha) d kappa^{2m+2})``
    over ``m >= 1`` with ``d = 2 K2 / (kappa (l1 - l) (kappa - 1))`` and
    ``(l, l1)`` the density anchor of ``E``.
    """
    consts = consts or BoundConstants()
    T = E.T if T is None else T
    if a_norm < 0:
        raise ValueError("a_norm must be nonnegative")
    l, l1 = choose_density_anchor(E)
    alpha, kappa = consts.alpha, consts.kappa
    K2 = consts.K2
    d = 2 * K2 / (kappa * (l1 - l) * (kappa - 1))
    lk1 = consts.log_K1(T, a_norm)
    lk3 = consts.log_K3(T, a_norm)
    log_s, terms = _log_series((2 + alpha) * d, kappa)
    log_c = consts.C_tilde + 2 * T * a_norm + math.log(3 / kappa) + lk3 - math.log(K2) - log_s
    return AssembledBound(log_c, l, l1, alpha, kappa, d, lk1, K2, lk3, log_s, terms)


def potential_shape_exponent(T: float, a_norm: float) -> float:
    """``T a + a^(2/3)``, the potential dependence of the log cost."""
    return T * a_norm + a_norm ** (2 / 3)


def calibrate_shape(kappas: dict[float, float], T: float, calibrate_at: float = 1.0) -> tuple[float, dict[float, float]]:
    """Fit ``C_fit`` at one amplitude, then margins ``log k(A) - log k(0) - C_fit s(A)`` (<= 0 passes)."""
    base = math.log(kappas[0.0])
    s1 = potential_shape_exponent(T, calibrate_at)
    c_fit = (math.log(kappas[calibrate_at]) - base) / s1
    margins = {A: math.log(k) - base - c_fit * potential_shape_exponent(T, A) for A, k in kappas.items()}
    return c_fit, margins
