"""Piecewise-bilinear (Q1) assembly on the uniform grid.

Velocity unknowns are ordered component-major: dof ``c * N + k`` with node
``k = i * (n + 1) + j``. Every volume integral uses 2x2 Gauss quadrature per
cell, which is exact for products of Q1 functions and their derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import Grid
from .errors import SingularSystem

_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])

# local node order: (0,0), (1,0), (1,1), (0,1) in (xi, eta)
_LOCAL = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])


def _shape(xi, eta):
    n = np.array([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta])
    d_xi = np.array([-(1 - eta), 1 - eta, eta, -eta])
    d_eta = np.array([-(1 - xi), -xi, xi, 1 - xi])
    return n, d_xi, d_eta


def _reference_tables():
    pts = [(a, b) for a in _GAUSS for b in _GAUSS]
    N = np.empty((4, 4))
    dN = np.empty((2, 4, 4))
    for g, (xi, eta) in enumerate(pts):
        N[g], dN[0, g], dN[1, g] = _shape(xi, eta)
    return N, dN


_N, _DN = _reference_tables()
_W = np.full(4, 0.25)


@dataclass
class Q1Space:
    grid: Grid

    def __post_init__(self):
        n = self.grid.n
        self.nodes = (n + 1) ** 2
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        i, j = i.ravel(), j.ravel()
        self.cell_nodes = np.stack(
            [(i + di) * (n + 1) + (j + dj) for di, dj in _LOCAL], axis=1
        )
        h = self.grid.h
        self.N = _N
        self.dN = _DN / h
        self.wq = _W * h * h
        self._rows = np.repeat(self.cell_nodes, 4, axis=1).ravel()
        self._cols = np.tile(self.cell_nodes, (1, 4)).ravel()

    # -- element-level helpers ----------------------------------------------

    def _assemble(self, local: np.ndarray) -> sp.csr_matrix:
        """Scatter element matrices (shape (4,4) or (cells,4,4)) into an N x N matrix."""
        ncell = self.cell_nodes.shape[0]
        if local.ndim == 2:
            local = np.broadcast_to(local, (ncell, 4, 4))
        mat = sp.coo_matrix(
            (local.ravel(), (self._rows, self._cols)), shape=(self.nodes, self.nodes)
        )
        return mat.tocsr()

    def at_quadrature(self, f: np.ndarray) -> np.ndarray:
        """Values of a nodal scalar field at the Gauss points, shape (cells, 4)."""
        return f.ravel()[self.cell_nodes] @ self.N.T

    def mass(self) -> sp.csr_matrix:
        return self._assemble(np.einsum("g,ga,gb->ab", self.wq, self.N, self.N))

    def stiffness(self, k: int, l: int) -> sp.csr_matrix:
        """``K[a, b] = int d_k N_a d_l N_b``."""
        return self._assemble(np.einsum("g,ga,gb->ab", self.wq, self.dN[k], self.dN[l]))

    def derivative_coupling(self, d: int) -> sp.csr_matrix:
        """``C[a, b] = int d_d N_a N_b`` (test derivative against trial value)."""
        return self._assemble(np.einsum("g,ga,gb->ab", self.wq, self.dN[d], self.N))

    def weighted_advection(self, coef: np.ndarray) -> sp.csr_matrix:
        """``A[a, b] = int coef N_a d_1 N_b`` with nodal ``coef``."""
        cq = self.at_quadrature(coef)
        local = np.einsum("eg,g,ga,gb->eab", cq, self.wq, self.N, self.dN[0])
        return self._assemble(local)

    def weighted_streamwise_diffusion(self, coef: np.ndarray) -> sp.csr_matrix:
        """``A[a, b] = int coef d_1 N_a d_1 N_b`` with nodal ``coef``."""
        cq = self.at_quadrature(coef)
        local = np.einsum("eg,g,ga,gb->eab", cq, self.wq, self.dN[0], self.dN[0])
        return self._assemble(local)

    def wall_mass(self) -> sp.csr_matrix:
        """1-D mass matrix along the walls ``z2 = 0`` and ``z2 = 1`` (scalar, N x N)."""
        n, h = self.grid.n, self.grid.h
        local = (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])
        rows, cols, vals = [], [], []
        for j in (0, n):
            a = np.arange(n) * (n + 1) + j
            b = a + (n + 1)
            pairs = np.stack([a, b], axis=1)
            rows.append(np.repeat(pairs, 2, axis=1).ravel())
            cols.append(np.tile(pairs, (1, 2)).ravel())
            vals.append(np.tile(local.ravel(), n))
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.nodes, self.nodes),
        )
        return mat.tocsr()

    # -- vector-valued operators ---------------------------------------------

    def viscous(self, mu: float, nu: float) -> sp.csr_matrix:
        """``2 mu int D(v):D(phi) + nu int div v div phi`` on velocity dofs."""
        K = [[self.stiffness(k, l) for l in range(2)] for k in range(2)]
        lap = K[0][0] + K[1][1]
        blocks = [[None, None], [None, None]]
        for d in range(2):
            for c in range(2):
                # test component d, trial component c
                blk = mu * K[c][d] + nu * K[d][c]
                if c == d:
                    blk = blk + mu * lap
                blocks[d][c] = blk
        return sp.bmat(blocks, format="csr")

    def vector_mass(self) -> sp.csr_matrix:
        m = self.mass()
        return sp.block_diag([m, m], format="csr")

    def divergence_coupling(self) -> sp.csr_matrix:
        """``G[(d, a), b] = int N_b d_d N_a``; ``G @ w`` is the load of ``int w div phi``."""
        return sp.vstack([self.derivative_coupling(0), self.derivative_coupling(1)], format="csr")

    # -- constraints ---------------------------------------------------------

    def fixed_mask(self) -> np.ndarray:
        """Dofs fixed strongly: both components on x1 = 0, 1; the normal one on walls."""
        n = self.grid.n
        fixed = np.zeros((2, n + 1, n + 1), dtype=bool)
        fixed[:, 0, :] = True
        fixed[:, n, :] = True
        fixed[1, :, 0] = True
        fixed[1, :, n] = True
        return fixed.ravel()


@dataclass
class ConstrainedSystem:
    """A square system restricted to free dofs, factored once and reused."""

    matrix: sp.csr_matrix
    free: np.ndarray
    fixed_values: np.ndarray

    def __post_init__(self):
        self._A_ff = self.matrix[self.free][:, self.free].tocsc()
        self._A_fd = self.matrix[self.free][:, ~self.free]
        try:
            self._lu = spla.splu(self._A_ff)
        except RuntimeError as exc:
            raise SingularSystem(f"factorization failed: {exc}") from exc
        diag = np.abs(self._lu.U.diagonal())
        if not np.all(np.isfinite(diag)) or diag.min() <= 1e-14 * diag.max():
            raise SingularSystem("discrete operator is numerically singular")

    def solve(self, load: np.ndarray) -> np.ndarray:
        rhs = load[self.free] - self._A_fd @ self.fixed_values[~self.free]
        x = self.fixed_values.copy()
        x[self.free] = self._lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SingularSystem("non-finite solution")
        return x

    def residual(self, x: np.ndarray, load: np.ndarray) -> np.ndarray:
        return (self.matrix @ x - load)[self.free]
