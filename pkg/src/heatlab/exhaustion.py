"""Sweeps over nested lattice boxes: control cost versus domain size,
convergence of bounded-domain solutions, and whole-space proxies for
controls computed on bounded boxes."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .heat import (
    LinearSolveConfig,
    SolverError,
    assemble_laplacian,
    l2_norm,
    semilinear_forward_solve,
    space_time_norm,
)
from .hum import ControlSystem, ConvergenceError, UnobservableError
from .lattice import BoxDomain, LatticeSpec, SpatialGrid, ball_mask, control_mask
from .semilinear import FixedPointConfig, FixedPointResult, Nonlinearity, fixed_point_solve, make_nonlinearity
from .timeset import TimeSet, active_step_mask

log = logging.getLogger(__name__)


def _bump(grid, center, radius):
    s = np.sum((grid.coords - center) ** 2, axis=1) / radius ** 2
    return np.where(s < 1, np.exp(1 - 1 / np.maximum(1 - s, 1e-300)), 0.0)


def _tent(grid, center, radius):
    d = np.max(np.abs(grid.coords - center), axis=1)
    return np.maximum(0.0, 1 - d / radius)


def _double_bump(grid, center, radius):
    off = np.zeros(grid.dim)
    off[0] = radius / 2
    return _bump(grid, center - off, radius / 2) - 0.5 * _bump(grid, center + off, radius / 2)


Z0_RECIPES = {"bump": _bump, "tent": _tent, "double-bump": _double_bump}
SOURCE_RECIPES = ("none", "bump", "bump-E")


def initial_state(recipe: str, grid: SpatialGrid, center, radius: float, amplitude: float = 1.0) -> np.ndarray:
    """Compactly supported initial data (support radius ``radius`` about ``center``)."""
    try:
        fn = Z0_RECIPES[recipe]
    except KeyError:
        raise ValueError(f"unknown z0 recipe {recipe!r}; choose from {sorted(Z0_RECIPES)}") from None
    return amplitude * fn(grid, np.asarray(center, dtype=float), radius)


@dataclass(frozen=True)
class SweepConfig:
    spec: LatticeSpec
    m: int
    sizes: tuple[int, ...]
    E: TimeSet
    K: int
    nonlinearity: Nonlinearity = field(default_factory=lambda: make_nonlinearity("zero"))
    z0: str = "bump"
    amplitude: float = 1.0
    fixed_point: FixedPointConfig = field(default_factory=FixedPointConfig)
    solver: LinearSolveConfig = field(default_factory=LinearSolveConfig)
    reference: int | None = None  # defaults to max(sizes)
    ball_radius: float | None = None  # B_M for exhaustion errors; defaults to half the smallest half-side
    source: str = "none"

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        if not sizes:
            raise ValueError("need at least one box size")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("box sizes must be strictly increasing")
        if sizes[0] < 1:
            raise ValueError("box sizes must be positive")
        object.__setattr__(self, "sizes", sizes)
        if self.reference is not None and self.reference < sizes[-1]:
            raise ValueError("reference box must contain every box of the sweep")
        if self.source not in SOURCE_RECIPES:
            raise ValueError(f"unknown source recipe {self.source!r}")
        if self.E.T / self.K * self.nonlinearity.L >= 1:
            raise ValueError("tau*L must be < 1")

    @property
    def reference_size(self) -> int:
        return self.reference if self.reference is not None else self.sizes[-1]

    def box(self, n: int) -> BoxDomain:
        return BoxDomain.centered(n, self.spec.dim)

    def grid(self, n: int) -> SpatialGrid:
        return SpatialGrid(self.spec, self.box(n), self.m)

    @property
    def center(self) -> np.ndarray:
        b = self.box(self.sizes[0]).bounds(self.spec)
        return np.array([(lo + hi) / 2 for lo, hi in b])

    @property
    def support_radius(self) -> float:
        # z0 support stays inside the smallest box
        return 0.75 * self.spec.r2 * self.sizes[0]

    def z0_on(self, grid: SpatialGrid) -> np.ndarray:
        return initial_state(self.z0, grid, self.center, self.support_radius, self.amplitude)

    def system(self, n: int) -> ControlSystem:
        g = self.grid(n)
        return ControlSystem(assemble_laplacian(g), control_mask(g), self.E, self.K, solver=self.solver)


@dataclass
class CostRecord:
    n: int
    extent: float
    nodes: int
    kappa: float
    final_ratio: float
    fp_iters: int
    cg_iters: int
    wall_ms: float
    status: str
    verified_ratio: float = math.nan
    iteration_kappas: list[float] = field(default_factory=list)


@dataclass
class CostCurve:
    records: list[CostRecord]

    @property
    def sizes(self) -> list[int]:
        return [r.n for r in self.records]

    @property
    def kappas(self) -> np.ndarray:
        return np.array([r.kappa for r in self.records])

    def record(self, n: int) -> CostRecord:
        for r in self.records:
            if r.n == n:
                return r
        raise KeyError(n)


def solve_on_box(cfg: SweepConfig, n: int) -> tuple[ControlSystem, np.ndarray, FixedPointResult]:
    system = cfg.system(n)
    z0 = cfg.z0_on(system.grid)
    return system, z0, fixed_point_solve(z0, cfg.nonlinearity, cfg.fixed_point, system)


def cost_sweep(cfg: SweepConfig) -> CostCurve:
    """Control cost on every box of the sweep; failures are recorded, not raised."""
    records = []
    for n in cfg.sizes:
        g = cfg.grid(n)
        extent = g.domain.extent(cfg.spec)[0]
        t0 = time.perf_counter()
        try:
            _, _, res = solve_on_box(cfg, n)
        except UnobservableError as exc:
            log.warning("n=%d: %s", n, exc)
            records.append(CostRecord(n, extent, g.size, math.nan, math.nan, 0, 0, 0.0, "unobservable"))
            continue
        except (ConvergenceError, SolverError) as exc:
            log.warning("n=%d: %s", n, exc)
            records.append(CostRecord(n, extent, g.size, math.nan, math.nan, 0, 0, 0.0, "solver-failure"))
            continue
        wall = (time.perf_counter() - t0) * 1e3
        status = "ok" if res.converged else "no-convergence"
        records.append(CostRecord(n, extent, g.size, res.kappa, res.final_ratio, res.iterations,
                                  int(sum(res.cg_iterations)), wall, status, res.verified_ratio, list(res.kappas)))
        log.info("n=%d kappa=%.6g final=%.3e fp=%d", n, res.kappa, res.final_ratio, res.iterations)
    return CostCurve(records)


@dataclass
class ConvergenceReport:
    sizes: list[int]
    errors: list[float]          # e_n on B_M (empty for limit checks)
    rho: list[float]             # ||y(T)|| / ||y0|| on the reference box (empty for well-posedness)
    y0_norm: float
    reference: int
    statuses: list[str] = field(default_factory=list)


def _source(cfg: SweepConfig, grid: SpatialGrid, kind: str) -> np.ndarray | None:
    if kind == "none":
        return None
    shape = cfg.z0_on(grid)
    src = np.tile(shape, (cfg.K, 1))
    if kind == "bump-E":
        src[~active_step_mask(cfg.E, cfg.K)] = 0.0
    return src


def wellposedness_sweep(cfg: SweepConfig, source: str | None = None) -> ConvergenceReport:
    """Uncontrolled semilinear solves on every box, compared on ``B_M`` with the reference box.

    Solutions are extended by zero; nested grids share node coordinates, so
    the comparison is node by node.
    """
    kind = cfg.source if source is None else source
    if kind not in SOURCE_RECIPES:
        raise ValueError(f"unknown source recipe {kind!r}")
    ref_n = cfg.reference_size
    small = cfg.grid(cfg.sizes[0])
    M = cfg.ball_radius if cfg.ball_radius is not None else 0.5 * cfg.spec.r2 * cfg.sizes[0]
    ball = ball_mask(small, cfg.center, M)
    if not ball.any():
        raise ValueError("B_M contains no grid node")

    def solve(n):
        g = cfg.grid(n)
        lap = assemble_laplacian(g)
        y = semilinear_forward_solve(lap, cfg.nonlinearity, cfg.z0_on(g), _source(cfg, g, kind), cfg.solver,
                                     cfg.K, cfg.E.T)
        return g.restrict(y, small)[:, ball]

    ref = solve(ref_n)
    y0n = l2_norm(cfg.z0_on(small), small)
    errors = []
    for n in cfg.sizes:
        y = ref if n == ref_n else solve(n)
        errors.append(space_time_norm(y - ref, small, cfg.E.T, levels=True))
    return ConvergenceReport(list(cfg.sizes), errors, [], y0n, ref_n)


def limit_control_check(cfg: SweepConfig, sizes=None, zero_control: bool = False) -> ConvergenceReport:
    """Apply each box's control, extended by zero, on the reference box.

    Every tested box must be at most half the reference per axis, except the
    reference itself (self-application).  ``zero_control`` gives the free
    decay ratios instead.
    """
    ref_n = cfg.reference_size
    if sizes is None:
        sizes = [n for n in cfg.sizes if 2 * n <= ref_n]
    sizes = list(sizes)
    for n in sizes:
        if n != ref_n and 2 * n > ref_n:
            raise ValueError(f"reference box {ref_n} is not at least twice box {n}")
    ref_grid = cfg.grid(ref_n)
    ref_lap = assemble_laplacian(ref_grid)
    y0 = cfg.z0_on(ref_grid)
    y0n = l2_norm(y0, ref_grid)
    rho, statuses = [], []
    for n in sizes:
        if zero_control:
            u_ref, status = None, "free"
        else:
            try:
                system, _, res = solve_on_box(cfg, n)
            except (UnobservableError, ConvergenceError, SolverError) as exc:
                log.warning("n=%d: %s", n, exc)
                rho.append(math.nan)
                statuses.append("failure")
                continue
            u_ref = ref_grid.extend(res.control, system.grid)
            status = "ok" if res.converged else "no-convergence"
        y = semilinear_forward_solve(ref_lap, cfg.nonlinearity, y0, u_ref, cfg.solver, cfg.K, cfg.E.T)
        rho.append(l2_norm(y[-1], ref_grid) / y0n if y0n > 0 else 0.0)
        statuses.append(status)
    return ConvergenceReport(sizes, [], rho, y0n, ref_n, statuses)
