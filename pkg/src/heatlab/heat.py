"""Finite differences for ``z_t - Δz + a z = source`` with zero Dirichlet data.

Time levels are ``t_k = k tau`` for ``k = 0..K``.  States are arrays of shape
``(K + 1, n)``; sources, controls and potentials live on steps and have shape
``(K, n)``, entry ``k`` acting on the step ``(t_k, t_{k+1})``.  One implicit
Euler step reads

    (I + tau A + tau diag(a_k)) z_{k+1} = z_k + tau source_k.

The backward solve applies the transposes of the same step matrices in
reverse order, so it is the exact adjoint of the discrete forward map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack

from .lattice import NodeMask, SpatialGrid


class SolverError(RuntimeError):
    """An inner linear solve failed to converge."""

    def __init__(self, message: str, residual: float = math.nan):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class DiscreteLaplacian:
    """``-Δ_h`` on interior nodes, CSR."""

    grid: SpatialGrid
    matrix: sp.csr_matrix = field(repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def __matmul__(self, v):
        return self.matrix @ v


def assemble_laplacian(grid: SpatialGrid) -> DiscreteLaplacian:
    h2 = grid.h ** 2
    ops = []
    for n in grid.shape:
        ops.append(sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h2)
    if grid.dim == 1:
        mat = ops[0]
    else:
        nx, ny = grid.shape
        mat = sp.kron(ops[0], sp.identity(ny)) + sp.kron(sp.identity(nx), ops[1])
    return DiscreteLaplacian(grid, sp.csr_matrix(mat))


@dataclass(frozen=True)
class PotentialField:
    """Step-wise potential ``a[k, j]`` (shape ``(K, n)``)."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("potential values must have shape (K, n)")
        object.__setattr__(self, "values", v)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @classmethod
    def constant(cls, c: float, K: int, n: int) -> "PotentialField":
        return cls(np.full((K, n), float(c)))

    @classmethod
    def zero(cls, K: int, n: int) -> "PotentialField":
        return cls.constant(0.0, K, n)

    @classmethod
    def sample(cls, fn, grid: SpatialGrid, T: float, K: int) -> "PotentialField":
        """Sample ``fn(t, *x)`` at step midpoints."""
        tau = T / K
        rows = [np.asarray(fn((k + 0.5) * tau, *grid.coords.T), dtype=float) * np.ones(grid.size) for k in range(K)]
        return cls(np.array(rows))


@dataclass(frozen=True)
class LinearSolveConfig:
    method: str = "auto"  # "direct" | "cg" | "auto" (direct in 1D, cg in 2D)
    rtol: float = 1e-10
    max_iter: int | None = None

    def __post_init__(self):
        if self.method not in ("auto", "direct", "cg"):
            raise ValueError(f"unknown linear solver method {self.method!r}")
        if not 0 < self.rtol <= 1e-4:
            raise ValueError("solver tolerance must lie in (0, 1e-4]")

    def resolve(self, dim: int) -> str:
        if self.method == "auto":
            return "direct" if dim == 1 else "cg"
        return self.method


class Stepper:
    """Solves ``(I + tau A + tau diag(a_k)) x = b`` for every step ``k``.

    Factorizations (1D direct) or Jacobi preconditioners (CG) are built
    lazily and shared between consecutive steps with identical potentials.
    The step matrices are symmetric, so the same solve serves the adjoint.
    """

    def __init__(self, lap: DiscreteLaplacian, potential: PotentialField | None, tau: float, K: int,
                 cfg: LinearSolveConfig | None = None):
        self.lap = lap
        self.tau = tau
        self.K = K
        self.cfg = cfg or LinearSolveConfig()
        self.method = self.cfg.resolve(lap.grid.dim)
        n = lap.n
        if potential is None:
            potential = PotentialField.zero(K, n)
        if potential.values.shape != (K, n):
            raise ValueError(f"potential shape {potential.values.shape} != {(K, n)}")
        self.potential = potential
        # step k uses factor slot self._slot[k]
        vals = potential.values
        slot = np.zeros(K, dtype=int)
        for k in range(1, K):
            slot[k] = slot[k - 1] if np.array_equal(vals[k], vals[k - 1]) else slot[k - 1] + 1
        self._slot = slot
        self._factors: dict[int, object] = {}
        self._base = sp.identity(n, format="csr") + tau * lap.matrix
        if self.method == "direct" and lap.grid.dim == 1:
            self._offdiag = -tau / lap.grid.h ** 2 * np.ones(n - 1)
            self._basediag = 1.0 + 2.0 * tau / lap.grid.h ** 2
        self.cg_iterations = 0

    def _factor(self, k: int):
        s = self._slot[k]
        fac = self._factors.get(s)
        if fac is not None:
            return fac
        a = self.potential.values[k]
        if self.method == "direct" and self.lap.grid.dim == 1:
            d = self._basediag + self.tau * a
            dl, d_, du, du2, ipiv, info = lapack.dgttrf(self._offdiag.copy(), d, self._offdiag.copy())
            if info != 0:
                raise SolverError(f"tridiagonal factorization failed (info={info})")
            fac = ("gtt", dl, d_, du, du2, ipiv)
        elif self.method == "direct":
            mat = (self._base + sp.diags(self.tau * a)).tocsc()
            fac = ("lu", sp.linalg.splu(mat))
        else:
            mat = (self._base + sp.diags(self.tau * a)).tocsr()
            fac = ("cg", mat, 1.0 / mat.diagonal())
        self._factors[s] = fac
        return fac

    def solve(self, k: int, rhs: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
        fac = self._factor(k)
        if fac[0] == "gtt":
            _, dl, d, du, du2, ipiv = fac
            x, info = lapack.dgttrs(dl, d, du, du2, ipiv, rhs)
            if info != 0:
                raise SolverError(f"tridiagonal solve failed (info={info})")
            return x
        if fac[0] == "lu":
            return fac[1].solve(rhs)
        return self._pcg(fac[1], fac[2], rhs, x0)

    def _pcg(self, mat, dinv, b, x0):
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros_like(b)
        x = np.zeros_like(b) if x0 is None else x0.copy()
        r = b - mat @ x
        z = dinv * r
        p = z.copy()
        rz = r @ z
        maxit = self.cfg.max_iter or 10 * len(b)
        tol = self.cfg.rtol * bnorm
        for it in range(maxit):
            if np.linalg.norm(r) <= tol:
                self.cg_iterations += it
                return x
            q = mat @ p
            alpha = rz / (p @ q)
            x += alpha * p
            r -= alpha * q
            z = dinv * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        res = np.linalg.norm(r) / bnorm
        if res <= self.cfg.rtol:
            return x
        raise SolverError(f"conjugate gradient did not converge in {maxit} iterations", res)


def _stepper(A, a, K, T, cfg, stepper):
    if stepper is not None:
        return stepper
    return Stepper(A, a, T / K, K, cfg)


def forward_solve(A: DiscreteLaplacian, a: PotentialField | None, z0: np.ndarray,
                  source: np.ndarray | None, cfg: LinearSolveConfig | None, K: int, T: float,
                  stepper: Stepper | None = None) -> np.ndarray:
    """Implicit Euler from ``z0``; returns all ``K + 1`` levels."""
    st = _stepper(A, a, K, T, cfg, stepper)
    z = np.empty((K + 1, A.n))
    z[0] = z0
    tau = st.tau
    for k in range(K):
        rhs = z[k] if source is None else z[k] + tau * source[k]
        z[k + 1] = st.solve(k, rhs, z[k])
    return z


def backward_adjoint_solve(A: DiscreteLaplacian, a: PotentialField | None, pT: np.ndarray,
                           cfg: LinearSolveConfig | None, K: int, T: float,
                           stepper: Stepper | None = None) -> np.ndarray:
    """Transpose of the forward map: ``phi_K = pT``, ``phi_k = M_k^T phi_{k+1}``-solve.

    ``phi[0]`` pairs with the initial state in the duality identity and
    ``phi[k]`` (``k < K``) is the adjoint seen by the source on step ``k``.
    """
    st = _stepper(A, a, K, T, cfg, stepper)
    phi = np.empty((K + 1, A.n))
    phi[K] = pT
    for k in range(K - 1, -1, -1):
        phi[k] = st.solve(k, phi[k + 1], phi[k + 1])
    return phi


def semilinear_forward_solve(A: DiscreteLaplacian, f, z0: np.ndarray, source: np.ndarray | None,
                             cfg: LinearSolveConfig | None, K: int, T: float,
                             stepper: Stepper | None = None) -> np.ndarray:
    """IMEX Euler: ``(I + tau A) z_{k+1} = z_k - tau f(z_k) + tau source_k``.

    ``f`` is a :class:`heatlab.semilinear.Nonlinearity` (or any callable with
    an ``L`` attribute).  Requires ``tau * L < 1``.
    """
    tau = T / K
    L = getattr(f, "L", None)
    if L is not None and tau * L >= 1:
        raise ValueError(f"explicit nonlinear term unstable: tau*L = {tau * L} >= 1")
    st = stepper if stepper is not None else Stepper(A, None, tau, K, cfg)
    z = np.empty((K + 1, A.n))
    z[0] = z0
    for k in range(K):
        rhs = z[k] - tau * f(z[k])
        if source is not None:
            rhs = rhs + tau * source[k]
        z[k + 1] = st.solve(k, rhs, z[k])
    return z


def space_time_norm(field: np.ndarray, grid: SpatialGrid, T: float, mask: NodeMask | np.ndarray | None = None,
                    steps: np.ndarray | None = None, levels: bool = False) -> float:
    """Discrete ``L^2(0,T; L^2)`` norm ``sqrt(sum w_j s_k v_jk^2 h^N tau)``.

    ``field`` is step-indexed (``K`` rows).  With ``levels=True`` it holds
    ``K + 1`` time levels and is integrated by the right-endpoint rule that
    matches implicit Euler: level ``k + 1`` stands for step ``k``.
    """
    field = np.asarray(field)
    if levels:
        field = field[1:]
    if steps is not None and len(steps) != field.shape[0]:
        raise ValueError("step mask length does not match the field")
    sq = field ** 2
    if mask is not None:
        sq = sq * (mask.weights if isinstance(mask, NodeMask) else np.asarray(mask, dtype=float))
    per_step = sq.sum(axis=1)
    if steps is not None:
        per_step = per_step * np.asarray(steps, dtype=float)
    return math.sqrt(float(per_step.sum()) * grid.cell_volume * (T / field.shape[0]))


def l2_norm(v: np.ndarray, grid: SpatialGrid, mask=None) -> float:
    v = np.asarray(v)
    if mask is not None:
        w = mask.weights if isinstance(mask, NodeMask) else np.asarray(mask, dtype=float)
        return math.sqrt(float((w * v * v).sum()) * grid.cell_volume)
    return math.sqrt(float(v @ v) * grid.cell_volume)
