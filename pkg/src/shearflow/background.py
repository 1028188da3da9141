"""Shear-flow background, boundary data, the data-size functional and the Lame lift.

Walls carry the tangent ``tau = e1`` on both ``x2 = 0`` and ``x2 = 1``; the wall
datum ``b`` and everything derived from it follow that orientation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import Grid, Params, boundary_norm, grad_fd, norm, trapezoid_weights
from .errors import ConfigError, CornerIncompatibility
from .galerkin import ConstrainedSystem, Q1Space

WALL_NORMALS = {"bottom": -1.0, "top": 1.0}  # second component of the outward normal


def eval_shear(x1: float, x2: float) -> tuple[tuple[float, float], float]:
    """Background velocity ``(1 + x2, 0)`` and density ``1`` at a point."""
    return (1.0 + x2, 0.0), 1.0


def shear_velocity(grid: Grid) -> np.ndarray:
    z1, z2 = grid.mesh()
    return np.stack([1.0 + z2, np.zeros_like(z2)])


def compute_btilde(params: Params) -> tuple[np.ndarray, np.ndarray]:
    """Wall datum produced by the shear flow, ``2 mu n.D(U0).tau + alpha U0.tau``.

    With ``D(U0) = [[0, 1/2], [1/2, 0]]`` this is ``-mu + alpha`` on the bottom
    wall and ``mu + 2 alpha`` on the top wall.
    """
    ones = np.ones(params.n + 1)
    bottom = (-params.mu + params.alpha * 1.0) * ones
    top = (params.mu + params.alpha * 2.0) * ones
    return bottom, top


# -- profile families ----------------------------------------------------------


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def profile(t: np.ndarray, family: str, amplitude: float = 1.0, k: int = 1) -> np.ndarray:
    """Named analytic boundary profile on ``[0, 1]``.

    ``sine`` is ``amplitude * sin(k pi t)``; ``bump`` is a smoothstep plateau
    that vanishes on ``[0, 0.1]`` and ``[0.9, 1]``.
    """
    t = np.asarray(t, dtype=float)
    if family == "sine":
        return amplitude * np.sin(k * np.pi * t)
    if family == "bump":
        return amplitude * _smoothstep((t - 0.1) / 0.3) * _smoothstep((0.9 - t) / 0.3)
    if family == "zero":
        return np.zeros_like(t)
    raise ConfigError(f"unknown profile family {family!r}")


@dataclass
class BoundarySpec:
    """Full boundary data sampled at the boundary nodes of each side.

    ``u0_in``/``u0_out`` have shape ``(2, n+1)`` indexed by ``x2``; ``rho_in``
    is indexed by ``x2``; ``b_bottom``/``b_top`` by ``x1``.
    """

    u0_in: np.ndarray
    u0_out: np.ndarray
    rho_in: np.ndarray
    b_bottom: np.ndarray
    b_top: np.ndarray

    @property
    def n(self) -> int:
        return len(self.rho_in) - 1

    @property
    def grid(self) -> Grid:
        return Grid(self.n)

    @classmethod
    def from_perturbation(
        cls,
        params: Params,
        du_in=None,
        du_out=None,
        drho_in=None,
        db_bottom=None,
        db_top=None,
    ) -> "BoundarySpec":
        """Shear-flow data plus the given perturbations (``None`` means zero)."""
        n = params.n
        t = np.linspace(0.0, 1.0, n + 1)
        shear = np.stack([1.0 + t, np.zeros_like(t)])
        bt_bottom, bt_top = compute_btilde(params)

        def vec(d):
            return np.zeros((2, n + 1)) if d is None else np.asarray(d, dtype=float)

        def sca(d):
            return np.zeros(n + 1) if d is None else np.asarray(d, dtype=float)

        spec = cls(
            u0_in=shear + vec(du_in),
            u0_out=shear + vec(du_out),
            rho_in=1.0 + sca(drho_in),
            b_bottom=bt_bottom + sca(db_bottom),
            b_top=bt_top + sca(db_top),
        )
        spec.validate(params)
        return spec

    def perturbation(self, params: Params) -> dict[str, np.ndarray]:
        t = np.linspace(0.0, 1.0, self.n + 1)
        shear = np.stack([1.0 + t, np.zeros_like(t)])
        bt_bottom, bt_top = compute_btilde(params)
        return {
            "u_in": self.u0_in - shear,
            "u_out": self.u0_out - shear,
            "rho_in": self.rho_in - 1.0,
            "b_bottom": self.b_bottom - bt_bottom,
            "b_top": self.b_top - bt_top,
        }

    def scaled(self, factor: float, params: Params) -> "BoundarySpec":
        pert = self.perturbation(params)
        return BoundarySpec.from_perturbation(
            params,
            factor * pert["u_in"],
            factor * pert["u_out"],
            factor * pert["rho_in"],
            factor * pert["b_bottom"],
            factor * pert["b_top"],
        )

    def validate(self, params: Params) -> None:
        m = params.n + 1
        shapes = [
            (self.u0_in, (2, m)),
            (self.u0_out, (2, m)),
            (self.rho_in, (m,)),
            (self.b_bottom, (m,)),
            (self.b_top, (m,)),
        ]
        for arr, shape in shapes:
            if arr.shape != shape:
                raise ConfigError(f"boundary profile has shape {arr.shape}, expected {shape}")
        if min(self.u0_in[0].min(), self.u0_out[0].min()) < params.c_floor:
            raise ConfigError("first velocity component on inflow/outflow falls below c_floor")
        if self.rho_in.min() <= 0:
            raise ConfigError("inflow density must be positive")


def compute_D0(spec: BoundarySpec, params: Params) -> float:
    """Distance of the boundary data from the shear flow's own data."""
    p = params.p_norm
    pert = spec.perturbation(params)
    d_u = sum(
        boundary_norm(pert[side][c], "frac", p, order=2.0 - 1.0 / p)
        for side in ("u_in", "u_out")
        for c in range(2)
    )
    d_b = sum(
        boundary_norm(pert[wall], "frac", p, order=1.0 - 1.0 / p)
        for wall in ("b_bottom", "b_top")
    )
    d_rho = boundary_norm(pert["rho_in"], "W1p", p)
    return float(d_u + d_b + d_rho)


# -- Lame lift ---------------------------------------------------------------


@dataclass
class LiftResult:
    u_tilde: np.ndarray
    norm_w2p: float
    wall_residual: float
    grad: np.ndarray = None
    laplacian: np.ndarray = None
    grad_div: np.ndarray = None

    def __post_init__(self):
        grid = Grid(self.u_tilde.shape[-1] - 1)
        if self.grad is None:
            self.grad = grad_fd(grid, self.u_tilde)
            hess = np.stack([grad_fd(grid, self.grad[m]) for m in range(2)], axis=1)
            # hess[k, m, c] = d_k d_m u_c
            self.laplacian = hess[0, 0] + hess[1, 1]
            self.grad_div = hess[:, 0, 0] + hess[:, 1, 1]


def navier_wall_trace(grid: Grid, u: np.ndarray, params: Params) -> tuple[np.ndarray, np.ndarray]:
    """``2 mu n.D(u).tau + alpha u.tau`` on the bottom and top wall nodes."""
    g = grad_fd(grid, u)
    d12 = 0.5 * (g[0, 1] + g[1, 0])
    out = []
    for wall, j in (("bottom", 0), ("top", grid.n)):
        out.append(2 * params.mu * WALL_NORMALS[wall] * d12[:, j] + params.alpha * u[0, :, j])
    return out[0], out[1]


def solve_lame(
    grid: Grid,
    params: Params,
    dirichlet: np.ndarray | None = None,
    body_force: np.ndarray | None = None,
    wall_datum: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Q1 Galerkin solve of ``-mu Lap u - (mu+nu) grad div u = body_force``.

    Values in ``dirichlet`` are imposed on x1 = 0, 1 (both components) and on
    the walls for the normal component; the Navier condition
    ``2 mu n.D(u).tau + alpha u.tau = wall_datum`` enters weakly.
    """
    space = Q1Space(grid)
    wall = space.wall_mass()
    matrix = space.viscous(params.mu, params.nu) + params.alpha * first_component_block(wall)
    load = np.zeros(2 * space.nodes)
    if body_force is not None:
        load += space.vector_mass() @ body_force.reshape(-1)
    if wall_datum is not None:
        load[: space.nodes] += wall @ wall_field(grid, *wall_datum).ravel()
    fixed = space.fixed_mask()
    values = np.zeros(2 * space.nodes)
    if dirichlet is not None:
        values[fixed] = dirichlet.reshape(-1)[fixed]
    system = ConstrainedSystem(matrix, ~fixed, values)
    return system.solve(load).reshape(2, grid.n + 1, grid.n + 1)


def first_component_block(a: sp.spmatrix) -> sp.csr_matrix:
    """Embed a scalar operator in the first velocity component block."""
    zero = sp.csr_matrix(a.shape)
    return sp.bmat([[a, zero], [zero, zero]], format="csr")


def wall_field(grid: Grid, bottom: np.ndarray, top: np.ndarray) -> np.ndarray:
    f = grid.zeros()
    f[:, 0] = bottom
    f[:, grid.n] = top
    return f


def check_corners(du: np.ndarray, side: str, tol: float = 1e-12) -> None:
    scale = max(1.0, float(np.max(np.abs(du))))
    for c in range(2):
        for end in (0, -1):
            if abs(du[c, end]) > tol * scale:
                raise CornerIncompatibility(
                    f"velocity perturbation component {c + 1} on {side} does not vanish at a corner"
                )


def solve_lame_lift(spec: BoundarySpec, params: Params) -> LiftResult:
    """Homogenizing lift: Lame system with the inflow/outflow perturbation as Dirichlet data."""
    grid = params.grid
    pert = spec.perturbation(params)
    check_corners(pert["u_in"], "inflow")
    check_corners(pert["u_out"], "outflow")
    dirichlet = grid.zeros(2)
    dirichlet[:, 0, :] = pert["u_in"]
    dirichlet[:, grid.n, :] = pert["u_out"]
    u = solve_lame(grid, params, dirichlet=dirichlet)
    u[1, :, 0] = 0.0
    u[1, :, grid.n] = 0.0
    bottom, top = navier_wall_trace(grid, u, params)
    w = trapezoid_weights(grid.n, grid.h)
    p = params.p_norm
    wall_res = float(w @ np.abs(bottom) ** p) ** (1 / p) + float(w @ np.abs(top) ** p) ** (1 / p)
    return LiftResult(u, norm(grid, u, "W2p_discrete", p), wall_res)
