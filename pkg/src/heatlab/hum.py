"""Penalized HUM null controls and observability-constant estimates.

For final adjoint data ``p`` let ``phi`` be the backward (transpose) solve
and ``u = chi_omega chi_E phi``.  The Gramian ``Λ p`` is the final state of
the forward solve from zero driven by ``u``.  The penalized problem

    (Λ + eps I) p = -F z0         (F z0: free final state)

is solved by conjugate gradients; the control ``u(p)`` then steers ``z0``
to ``z(T) = -eps p``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .heat import (
    DiscreteLaplacian,
    LinearSolveConfig,
    PotentialField,
    Stepper,
    backward_adjoint_solve,
    forward_solve,
    l2_norm,
    space_time_norm,
)
from .lattice import NodeMask, SpatialGrid
from .timeset import TimeSet, active_step_mask

log = logging.getLogger(__name__)


class UnobservableError(ValueError):
    """The observation set ``(omega ∩ Omega) x E`` sees nothing."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass
class ControlSystem:
    """Linear heat equation with potential, controlled on ``mask x steps``."""

    lap: DiscreteLaplacian
    mask: NodeMask
    E: TimeSet
    K: int
    potential: PotentialField | None = None
    solver: LinearSolveConfig = field(default_factory=LinearSolveConfig)

    def __post_init__(self):
        if self.potential is None:
            self.potential = PotentialField.zero(self.K, self.lap.n)
        self.steps = active_step_mask(self.E, self.K)
        self.stepper = Stepper(self.lap, self.potential, self.tau, self.K, self.solver)
        self._w = self.mask.weights * 1.0
        self._s = self.steps.astype(float)

    @property
    def grid(self) -> SpatialGrid:
        return self.lap.grid

    @property
    def T(self) -> float:
        return self.E.T

    @property
    def tau(self) -> float:
        return self.E.T / self.K

    @property
    def observable(self) -> bool:
        return not self.mask.empty and bool(self.steps.any())

    def with_potential(self, potential: PotentialField) -> "ControlSystem":
        return replace(self, potential=potential)

    def forward(self, z0, source=None) -> np.ndarray:
        return forward_solve(self.lap, self.potential, z0, source, self.solver, self.K, self.T, self.stepper)

    def backward(self, pT) -> np.ndarray:
        return backward_adjoint_solve(self.lap, self.potential, pT, self.solver, self.K, self.T, self.stepper)

    def control_from_adjoint(self, phi: np.ndarray) -> np.ndarray:
        """``chi_omega chi_E phi`` on steps; zero (bitwise) off the support."""
        u = np.zeros((self.K, self.lap.n))
        on = self._w > 0
        u[np.ix_(self.steps, on)] = phi[:-1][np.ix_(self.steps, on)]
        return u

    def control_norm(self, u) -> float:
        return space_time_norm(u, self.grid, self.T)

    def norm(self, v) -> float:
        return l2_norm(v, self.grid)

    def reversed(self) -> "ControlSystem":
        """Same system with time run backwards (potential and E reflected)."""
        E = TimeSet(self.T, tuple((self.T - b, self.T - a) for a, b in self.E.intervals))
        pot = PotentialField(self.potential.values[::-1].copy())
        sys = ControlSystem(self.lap, self.mask, E, self.K, pot, self.solver)
        # reflected midpoints are exactly the reflected steps
        sys.steps = self.steps[::-1].copy()
        sys._s = sys.steps.astype(float)
        return sys


def gramian_apply(pT: np.ndarray, system: ControlSystem) -> np.ndarray:
    phi = system.backward(pT)
    return system.forward(np.zeros_like(pT), system.control_from_adjoint(phi))[-1]


@dataclass(frozen=True)
class HumConfig:
    eps: float = 1e-8
    tol: float = 1e-10
    max_iter: int = 5000

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError("penalty eps must lie in (0, 1]")
        if not 0 < self.tol <= 1e-8:
            raise ValueError("outer CG tolerance must lie in (0, 1e-8]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class HumResult:
    p_hat: np.ndarray = field(repr=False)
    control: np.ndarray = field(repr=False)
    state: np.ndarray = field(repr=False)
    kappa: float
    final_ratio: float
    iterations: int
    residual: float
    identity_error: float  # ||z(T) + eps p|| / ||z0||
    z0_norm: float


def _cg(apply, b, tol, max_iter, x0=None):
    """Plain CG on an SPD operator; returns (x, iterations, relative residual)."""
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - apply(x)
        if np.linalg.norm(r) <= tol * bnorm:
            return x, 0, np.linalg.norm(r) / bnorm
    p = r.copy()
    rr = r @ r
    for it in range(1, max_iter + 1):
        q = apply(p)
        pq = p @ q
        if pq <= 0:
            return x, it, math.sqrt(rr) / bnorm
        alpha = rr / pq
        x += alpha * p
        r -= alpha * q
        rr_new = r @ r
        if math.sqrt(rr_new) <= tol * bnorm:
            return x, it, math.sqrt(rr_new) / bnorm
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, max_iter, math.sqrt(rr) / bnorm


def solve_penalized_hum(z0: np.ndarray, system: ControlSystem, cfg: HumConfig | None = None,
                        p0: np.ndarray | None = None) -> HumResult:
    """Penalized HUM control for ``z0``; ``p0`` warm-starts the outer CG."""
    cfg = cfg or HumConfig()
    z0 = np.asarray(z0, dtype=float)
    n = system.lap.n
    z0n = system.norm(z0)
    if z0n == 0.0:
        zeros = np.zeros((system.K, n))
        return HumResult(np.zeros(n), zeros, np.zeros((system.K + 1, n)), 0.0, 0.0, 0, 0.0, 0.0, 0.0)
    if not system.observable:
        raise UnobservableError("control set omega ∩ Omega (or E on the time grid) is empty")

    rhs = -system.forward(z0)[-1]
    eps = cfg.eps
    p, its, res = _cg(lambda v: gramian_apply(v, system) + eps * v, rhs, cfg.tol, cfg.max_iter, p0)
    if res > cfg.tol:
        raise ConvergenceError(f"HUM conjugate gradient stopped at relative residual {res:.3e}", res, its)

    u = system.control_from_adjoint(system.backward(p))
    z = system.forward(z0, u)
    kappa = system.control_norm(u) / z0n
    final_ratio = system.norm(z[-1]) / z0n
    ident = system.norm(z[-1] + eps * p) / z0n
    log.debug("HUM: %d CG iterations, kappa=%.6g, final ratio=%.3e", its, kappa, final_ratio)
    return HumResult(p, u, z, kappa, final_ratio, its, res, ident, z0n)


# ---------------------------------------------------------------------------
# observability constant

@dataclass
class ObservabilityEstimate:
    constant: float
    probe: str
    ratios: dict[str, float]
    power_iterations: int = 0


def _box_modes(grid: SpatialGrid, count: int) -> list[tuple[str, np.ndarray]]:
    bounds = grid.domain.bounds(grid.spec)
    orders = []
    rng = range(1, count + 2)
    if grid.dim == 1:
        orders = [(k,) for k in rng]
    else:
        orders = [(i, j) for i in rng for j in rng]
    lengths = [b - a for a, b in bounds]
    orders.sort(key=lambda ks: (sum((k / L) ** 2 for k, L in zip(ks, lengths)), ks))
    out = []
    for ks in orders[:count]:
        v = np.ones(grid.size)
        for d, (k, (a, b)) in enumerate(zip(ks, bounds)):
            v = v * np.sin(k * np.pi * (grid.coords[:, d] - a) / (b - a))
        out.append(("mode" + "x".join(map(str, ks)), v))
    return out


def probe_family(grid: SpatialGrid) -> list[tuple[str, np.ndarray]]:
    """Constant, centred bump and the four lowest Dirichlet modes of the box."""
    c = grid.center()
    half = min(b - a for a, b in grid.domain.bounds(grid.spec)) / 2
    rho = 0.75 * half
    s = np.sum((grid.coords - c) ** 2, axis=1) / rho ** 2
    bump = np.where(s < 1, np.exp(1 - 1 / np.maximum(1 - s, 1e-300)), 0.0)
    return [("constant", np.ones(grid.size)), ("bump", bump)] + _box_modes(grid, 4)


def observability_ratio(phi0: np.ndarray, system: ControlSystem) -> float:
    """``||phi(T)||^2 / ||phi||^2_{(omega ∩ Omega) x E}`` for the forward solve from phi0."""
    phi = system.forward(phi0)
    num = system.norm(phi[-1]) ** 2
    den = space_time_norm(phi, system.grid, system.T, system.mask, system.steps, levels=True) ** 2
    if den == 0.0:
        if num == 0.0:
            return 0.0
        raise UnobservableError("nonzero probe with zero observation")
    return num / den


def estimate_observability_constant(system: ControlSystem, power_iterations: int = 0, seed: int = 0,
                                    eps: float = 1e-10, tol: float = 1e-10) -> ObservabilityEstimate:
    """Largest observed ratio over the fixed probes (a lower bound).

    With ``power_iterations > 0`` a seeded power iteration on the penalized
    null-control map of the time-reversed system runs as well; its adjoint
    iterate is the forward probe that nearly attains the supremum.
    """
    if not system.observable:
        raise UnobservableError("control set omega ∩ Omega (or E on the time grid) is empty")
    ratios = {name: observability_ratio(v, system) for name, v in probe_family(system.grid)}
    its = 0
    if power_iterations > 0:
        probe, its = _power_probe(system, power_iterations, seed, eps, tol)
        ratios["power"] = observability_ratio(probe, system)
    best = max(ratios, key=ratios.get)
    return ObservabilityEstimate(ratios[best], best, ratios, its)


def _power_probe(system: ControlSystem, iterations: int, seed: int, eps: float, tol: float):
    # ||phi(T)||^2 / observed^2 over phi0 equals the squared null-control cost
    # of the reversed system; p = (Λ + eps)^{-1} F z for the dominant z is the
    # maximizing forward probe
    rev = system.reversed()
    rng = np.random.Generator(np.random.Philox(seed))
    n = system.lap.n
    z = rng.standard_normal(n)
    z /= np.linalg.norm(z)
    op = lambda v: gramian_apply(v, rev) + eps * v  # noqa: E731
    max_cg = 20 * n + 100
    p = np.zeros(n)
    prev = 0.0
    k = 0
    for k in range(1, iterations + 1):
        p, _, _ = _cg(op, rev.forward(z)[-1], tol, max_cg)
        w = gramian_apply(p, rev)
        q, _, _ = _cg(op, w, tol, max_cg)
        y = rev.backward(q)[0]
        lam = float(z @ y)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            break
        z = y / ny
        if k > 1 and abs(lam - prev) <= 1e-8 * abs(lam):
            break
        prev = lam
    p, _, _ = _cg(op, rev.forward(z)[-1], tol, max_cg)
    return p, k
