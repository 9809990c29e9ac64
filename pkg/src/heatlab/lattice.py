"""Equidistributed control sets on lattice boxes.

Space is tiled by closed cubes of half-side ``r2`` centred at
``x_i = (2 i + 1) r2`` (integer multi-index ``i``).  The control set is the
union of closed balls of radius ``r1`` about those centres.  A domain is an
axis-aligned box of whole cubes, discretised by a uniform grid whose spacing
divides the cube side, so cube faces always fall on grid lines.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# relative slack when deciding "distance == r1" on floating-point coordinates
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class LatticeSpec:
    dim: int
    r1: float
    r2: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not 0 < self.r1 < self.r2:
            raise ValueError(f"(H1) requires 0 < r1 < r2, got r1={self.r1}, r2={self.r2}")

    @property
    def cube_side(self) -> float:
        return 2.0 * self.r2


@dataclass(frozen=True)
class BoxDomain:
    """Cells ``lo[d] <= i[d] <= hi[d]`` (inclusive) on every axis."""

    lo: tuple[int, ...]
    hi: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(int(v) for v in np.atleast_1d(self.lo))
        hi = tuple(int(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise ValueError("lo and hi must have the same length")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"empty box: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def cells(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    def extent(self, spec: LatticeSpec) -> tuple[float, ...]:
        return tuple(spec.cube_side * c for c in self.cells)

    def bounds(self, spec: LatticeSpec) -> list[tuple[float, float]]:
        s = spec.cube_side
        return [(s * a, s * (b + 1)) for a, b in zip(self.lo, self.hi)]

    def contains(self, other: "BoxDomain") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    @classmethod
    def centered(cls, n: int, dim: int = 1) -> "BoxDomain":
        """Box of ``n`` cubes per axis; consecutive ``n`` give nested boxes."""
        if n < 1:
            raise ValueError("n must be >= 1")
        lo = -(n // 2)
        return cls((lo,) * dim, (lo + n - 1,) * dim)


def build_lattice_centers(spec: LatticeSpec, domain: BoxDomain) -> np.ndarray:
    """Centres of every cube in the box, shape ``(n_cubes, dim)``, C order."""
    if domain.dim != spec.dim:
        raise ValueError("domain and lattice dimensions differ")
    axes = [np.arange(a, b + 1) for a, b in zip(domain.lo, domain.hi)]
    idx = np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, spec.dim)
    return (2.0 * idx + 1.0) * spec.r2


@dataclass(frozen=True)
class SpatialGrid:
    """Interior nodes of a uniform grid on a box of cubes.

    Node ``j`` on axis ``d`` sits at ``g * h`` for the global integer index
    ``g``; global indices make grids of nested boxes line up exactly.
    Nodes are flattened in C order (last axis fastest).
    """

    spec: LatticeSpec
    domain: BoxDomain
    m: int

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m (cells per cube side) must be >= 2")
        if self.domain.dim != self.spec.dim:
            raise ValueError("domain and lattice dimensions differ")

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def h(self) -> float:
        return self.spec.cube_side / self.m

    @cached_property
    def axis_indices(self) -> list[np.ndarray]:
        # global node indices of interior nodes, per axis
        return [np.arange(self.m * a + 1, self.m * (b + 1)) for a, b in zip(self.domain.lo, self.domain.hi)]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.axis_indices)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @cached_property
    def axis_coords(self) -> list[np.ndarray]:
        return [g * self.h for g in self.axis_indices]

    @cached_property
    def global_index(self) -> np.ndarray:
        """Integer global indices, shape ``(size, dim)``."""
        mesh = np.meshgrid(*self.axis_indices, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    @cached_property
    def coords(self) -> np.ndarray:
        return self.global_index * self.h

    def locate(self, other: "SpatialGrid") -> np.ndarray:
        """Positions in ``self`` of the nodes of a grid on a sub-box."""
        if other.m != self.m or other.spec != self.spec:
            raise ValueError("grids must share lattice and resolution")
        if not self.domain.contains(other.domain):
            raise ValueError("other grid is not on a sub-box")
        shape = self.shape
        offs = [g[0] for g in self.axis_indices]
        local = other.global_index - np.asarray(offs)
        return np.ravel_multi_index(tuple(local.T), shape)

    def extend(self, values: np.ndarray, other: "SpatialGrid") -> np.ndarray:
        """Zero extension of ``values`` given on ``other`` (a sub-grid) to ``self``."""
        values = np.asarray(values)
        out = np.zeros(values.shape[:-1] + (self.size,))
        out[..., self.locate(other)] = values
        return out

    def restrict(self, values: np.ndarray, other: "SpatialGrid") -> np.ndarray:
        return np.asarray(values)[..., self.locate(other)]

    def sample(self, fn) -> np.ndarray:
        """Evaluate ``fn(*coords)`` at interior nodes."""
        return np.asarray(fn(*self.coords.T), dtype=float) * np.ones(self.size)

    def center(self) -> np.ndarray:
        return np.array([(a + b) / 2 for a, b in self.domain.bounds(self.spec)])


@dataclass(frozen=True)
class NodeMask:
    weights: np.ndarray = field(repr=False)

    @property
    def count(self) -> int:
        return int(self.weights.sum())

    @property
    def empty(self) -> bool:
        return self.count == 0

    @classmethod
    def full(cls, grid: SpatialGrid) -> "NodeMask":
        return cls(np.ones(grid.size))


def control_mask(grid: SpatialGrid, r1: float | None = None) -> NodeMask:
    """Mark nodes within distance ``r1`` (ties inside) of an in-domain centre.

    ``r1`` defaults to the lattice inner radius.
    """
    spec = grid.spec
    r1 = spec.r1 if r1 is None else r1
    # distance to the nearest centre is per-axis: centres are odd multiples of r2
    # and each node's own cube (or a neighbour clipped to the box) is nearest
    cell = np.floor(grid.coords / spec.cube_side)
    lo = np.asarray(grid.domain.lo)
    hi = np.asarray(grid.domain.hi)
    best = np.full(grid.size, np.inf)
    for shift in itertools.product((-1, 0, 1), repeat=grid.dim):
        c = np.clip(cell + np.asarray(shift), lo, hi)
        d = np.linalg.norm(grid.coords - (2.0 * c + 1.0) * spec.r2, axis=1)
        best = np.minimum(best, d)
    inside = best <= r1 * (1.0 + _TIE_RTOL)
    return NodeMask(inside.astype(float))


def ball_mask(grid: SpatialGrid, x0, radius: float) -> np.ndarray:
    """Boolean mask of interior nodes in the closed ball ``B_radius(x0)``."""
    d = np.linalg.norm(grid.coords - np.atleast_1d(np.asarray(x0, dtype=float)), axis=1)
    return d <= radius * (1.0 + _TIE_RTOL)


def cube_mask(grid: SpatialGrid, x0, half_side: float) -> np.ndarray:
    d = np.max(np.abs(grid.coords - np.atleast_1d(np.asarray(x0, dtype=float))), axis=1)
    return d <= half_side * (1.0 + _TIE_RTOL)
