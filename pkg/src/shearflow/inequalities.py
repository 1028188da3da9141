"""Discrete Korn- and Poincare-type ratios on the constrained velocity space.

Quadratic forms come from the Q1 matrices, so every ratio is exact for the
bilinear interpolant of the sampled field. The closed-form sine row is
evaluated separately by Gauss-Legendre quadrature of the exact gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import Grid
from .galerkin import Q1Space


@dataclass
class QuadraticForms:
    """``2 int |D v|^2``, ``int |grad v|^2``, ``int (div v)^2`` and ``int |v|^2``."""

    sym: float
    grad: float
    div: float
    mass: float

    @property
    def korn_ratio(self) -> float:
        return (self.sym + self.div) / self.grad

    @property
    def poincare_ratio(self) -> float:
        return self.grad / self.mass

    def printed_ratio(self, mu: float = 1.0, nu: float = 0.0) -> float:
        """``(2 mu int |D|^2 + nu int div^2) / (mu pi^2 int |grad v|^2)``; reported, never asserted."""
        return (mu * self.sym + nu * self.div) / (mu * np.pi**2 * self.grad)


class FormEvaluator:
    def __init__(self, grid: Grid):
        space = Q1Space(grid)
        self.grid = grid
        self.space = space
        lap = space.stiffness(0, 0) + space.stiffness(1, 1)
        self.sym = space.viscous(1.0, 0.0)
        self.div = space.viscous(0.0, 1.0)
        self.grad = sp.block_diag([lap, lap], format="csr")
        self.mass = space.vector_mass()
        self.free = ~space.fixed_mask()

    def forms(self, v: np.ndarray) -> QuadraticForms:
        x = v.ravel()
        return QuadraticForms(
            float(x @ self.sym @ x),
            float(x @ self.grad @ x),
            float(x @ self.div @ x),
            float(x @ self.mass @ x),
        )

    def random_field(self, rng: np.random.Generator) -> np.ndarray:
        """Standard normal nodal values on free dofs, zero on constrained ones."""
        x = np.zeros(self.free.size)
        x[self.free] = rng.standard_normal(int(self.free.sum()))
        return x.reshape((2,) + self.grid.shape)


def random_ratios(grid: Grid, count: int = 100, seed: int = 0) -> list[QuadraticForms]:
    ev = FormEvaluator(grid)
    rng = np.random.default_rng(seed)
    return [ev.forms(ev.random_field(rng)) for _ in range(count)]


def sine_field_exact(order: int = 40) -> QuadraticForms:
    """Forms of ``v = (sin(pi z1) sin(pi z2), 0)`` by tensor Gauss-Legendre quadrature."""
    x, w = np.polynomial.legendre.leggauss(order)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    z1, z2 = np.meshgrid(x, x, indexing="ij")
    ww = np.outer(w, w)
    pi = np.pi
    d1 = pi * np.cos(pi * z1) * np.sin(pi * z2)
    d2 = pi * np.sin(pi * z1) * np.cos(pi * z2)
    v1 = np.sin(pi * z1) * np.sin(pi * z2)
    # only v1 is nonzero: |D|^2 = d1^2 + d2^2 / 2, div = d1
    return QuadraticForms(
        sym=float(np.sum(ww * (2 * d1**2 + d2**2))),
        grad=float(np.sum(ww * (d1**2 + d2**2))),
        div=float(np.sum(ww * d1**2)),
        mass=float(np.sum(ww * v1**2)),
    )


SINE_CLOSED_FORM = {"sym": 3 * np.pi**2 / 4, "grad": np.pi**2 / 2, "div": np.pi**2 / 4}


def poincare_x1_field(grid: Grid) -> float:
    """Discrete Poincare ratio of ``v = (sin(pi z1), 0)``, close to ``pi^2``."""
    z1, _ = grid.mesh()
    v = np.stack([np.sin(np.pi * z1), np.zeros(grid.shape)])
    return FormEvaluator(grid).forms(v).poincare_ratio
