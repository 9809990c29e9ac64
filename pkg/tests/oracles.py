"""Dense reference computations shared by the unit and acceptance tests."""
import numpy as np
import scipy.linalg as sl

from heatlab.timeset import active_step_mask


class DenseOracle:
    """Dense propagators for the same implicit Euler scheme."""

    def __init__(self, system):
        g = system.grid
        tau = system.tau
        A = system.lap.matrix.toarray()
        a = system.potential.values
        n, K = g.size, system.K
        self.Minv = [np.linalg.inv(np.eye(n) + tau * A + tau * np.diag(a[k])) for k in range(K)]
        self.sys, self.n, self.K, self.tau, self.h = system, n, K, tau, g.h
        self.s = active_step_mask(system.E, K)
        self.W = np.diag(system.mask.weights)

    def prop(self, j, k):
        P = np.eye(self.n)
        for i in range(j, k):
            P = self.Minv[i] @ P
        return P

    @property
    def F(self):
        return self.prop(0, self.K)

    @property
    def gramian(self):
        return sum(self.tau * self.prop(k, self.K) @ self.W @ self.prop(k, self.K).T
                   for k in range(self.K) if self.s[k])

    def kappa(self, z0, eps):
        p = np.linalg.solve(self.gramian + eps * np.eye(self.n), -self.F @ z0)
        u2 = sum(np.sum((self.W @ self.prop(k, self.K).T @ p) ** 2) for k in range(self.K) if self.s[k])
        return np.sqrt(u2 * self.tau * self.h) / np.sqrt(z0 @ z0 * self.h)

    def observability(self):
        P = self.h * self.F.T @ self.F
        Q = sum(self.tau * self.h * self.prop(0, k + 1).T @ self.W @ self.prop(0, k + 1)
                for k in range(self.K) if self.s[k])
        return sl.eigh(P, Q, eigvals_only=True)[-1]
