"""Linearized mass/momentum system in flow-aligned coordinates.

Momentum (weak form, Q1 elements, for every admissible test field phi):

    int (Ubar o psi) d_z1 v . phi + int (v . grad U0) . phi - gamma int w div phi
      + 2 mu int D(v):D(phi) + nu int div v div phi + alpha int_walls v1 phi1
      = int g . phi + int_walls Btilde phi1

with v = 0 on x1 = 0, 1 and v2 = 0 on the walls. Mass: w = S(f - div v).
The two are coupled in one of three ways:

* ``staggered``: the momentum matrix is factored once and the density is
  updated by the transport operator until the increments settle;
* ``coupled``: one sparse solve for ``(v, w)`` where the mass equation is
  written as the row-wise trapezoid recurrence that ``S`` evaluates, so the
  discrete solution is the fixed point of the staggered iteration;
* a dense monolithic solve with ``S`` substituted (small grids, cross-check).

The staggered iteration amplifies transiently when ``gamma / mu`` is large,
which is why ``inner_solver="auto"`` falls back to the coupled solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .background import first_component_block, wall_field
from .core import Grid, Params, divergence, divergence_matrix, norm, trapezoid_weights
from .errors import InnerDivergence, SingularSystem
from .galerkin import ConstrainedSystem, Q1Space
from .transform import FlowMap
from .transport import coeff_a, row_sup_l2, transport_S


@dataclass
class LinearData:
    f: np.ndarray
    g: np.ndarray
    B_bottom: np.ndarray
    B_top: np.ndarray
    w_in: np.ndarray
    fmap: FlowMap
    v_bar: np.ndarray
    params: Params

    @property
    def grid(self) -> Grid:
        return self.fmap.grid

    @property
    def a(self) -> np.ndarray:
        if not hasattr(self, "_a"):
            self._a = coeff_a(self.fmap, self.v_bar, self.params)
        return self._a

    @classmethod
    def zeros(cls, params: Params, fmap: FlowMap) -> "LinearData":
        grid = fmap.grid
        m = grid.n + 1
        return cls(
            f=grid.zeros(),
            g=grid.zeros(2),
            B_bottom=np.zeros(m),
            B_top=np.zeros(m),
            w_in=np.zeros(m),
            fmap=fmap,
            v_bar=grid.zeros(2),
            params=params,
        )

    def data_norm(self) -> float:
        """``||f|| + ||g|| + |Btilde|_{L2(walls)} + |w_in|_{L2}``."""
        grid = self.grid
        w = trapezoid_weights(grid.n, grid.h)
        wall = np.sqrt(w @ self.B_bottom**2) + np.sqrt(w @ self.B_top**2)
        return (
            norm(grid, self.f, "L2")
            + norm(grid, self.g, "L2")
            + float(wall)
            + float(np.sqrt(w @ self.w_in**2))
        )


@dataclass
class MomentumSystem:
    """Assembled momentum equations on all velocity dofs plus the constraint mask."""

    matrix: sp.csr_matrix
    load: np.ndarray
    free: np.ndarray


@dataclass
class LinearSolution:
    v: np.ndarray
    w: np.ndarray
    inner_iterations: int
    inner_residual: float
    increments: list[float] = field(default_factory=list)
    method: str = "staggered"


class MomentumOperator:
    """Momentum matrix for fixed coefficients, factored once; loads depend on ``w``."""

    def __init__(self, data: LinearData):
        params = data.params
        grid = data.grid
        space = Q1Space(grid)
        self.space = space
        self.grid = grid
        self.params = params
        ubar = 1.0 + data.fmap.psi2
        adv = space.weighted_advection(ubar)
        if params.upwind:
            adv = adv + space.weighted_streamwise_diffusion(0.5 * grid.h * np.abs(ubar))
        mass = space.mass()
        zero = sp.csr_matrix(mass.shape)
        shear_coupling = sp.bmat([[zero, mass], [zero, zero]], format="csr")
        wall = space.wall_mass()
        self.matrix = (
            sp.block_diag([adv, adv], format="csr")
            + shear_coupling
            + space.viscous(params.mu, params.nu)
            + params.alpha * first_component_block(wall)
        ).tocsr()
        self.div_coupling = space.divergence_coupling()
        load = space.vector_mass() @ data.g.reshape(-1)
        load[: space.nodes] += wall @ wall_field(grid, data.B_bottom, data.B_top).ravel()
        self.base_load = load
        self.free = ~space.fixed_mask()
        self._system = None

    @property
    def system(self) -> ConstrainedSystem:
        if self._system is None:
            self._system = ConstrainedSystem(self.matrix, self.free, np.zeros(self.matrix.shape[0]))
        return self._system

    def load(self, w: np.ndarray) -> np.ndarray:
        return self.base_load + self.params.gamma * (self.div_coupling @ w.ravel())

    def solve(self, w: np.ndarray) -> np.ndarray:
        x = self.system.solve(self.load(w))
        return x.reshape((2,) + self.grid.shape)

    def residual(self, v: np.ndarray, w: np.ndarray) -> np.ndarray:
        return (self.matrix @ v.ravel() - self.load(w))[self.free]


def assemble_momentum(w: np.ndarray, data: LinearData) -> MomentumSystem:
    op = MomentumOperator(data)
    return MomentumSystem(op.matrix, op.load(w), op.free)


def density_from_velocity(v: np.ndarray, data: LinearData) -> np.ndarray:
    """``w = S(f - div v)`` with the nodal finite-difference divergence."""
    return transport_S(data.f - divergence(data.grid, v), data.w_in, data.a)


def _increment(grid: Grid, dv: np.ndarray, dw: np.ndarray) -> float:
    return norm(grid, dv, "H1") + norm(grid, dw, "L2")


def solve_linear_system(
    data: LinearData, operator: MomentumOperator | None = None, method: str | None = None
) -> LinearSolution:
    """Solve the coupled linear problem with ``method`` (default ``params.inner_solver``).

    ``auto`` runs the staggered iteration and switches to the coupled sparse
    solve if that iteration diverges or exhausts ``max_inner``.
    """
    method = method or data.params.inner_solver
    op = operator or MomentumOperator(data)
    if method == "coupled":
        return solve_coupled(data, op)
    if method == "staggered":
        return solve_staggered(data, op)
    try:
        sol = solve_staggered(data, op)
    except InnerDivergence:
        return solve_coupled(data, op)
    if sol.inner_residual >= data.params.tol_inner:
        return solve_coupled(data, op)
    return sol


def solve_staggered(data: LinearData, operator: MomentumOperator | None = None) -> LinearSolution:
    """Staggered iteration: ``w^k = S(f - div v^{k-1})``, ``v^k`` = momentum solve with ``w^k``."""
    params = data.params
    grid = data.grid
    op = operator or MomentumOperator(data)
    v = grid.zeros(2)
    w = grid.zeros()
    increments = []
    growth = 0
    for k in range(1, params.max_inner + 1):
        w_new = density_from_velocity(v, data)
        v_new = op.solve(w_new)
        inc = _increment(grid, v_new - v, w_new - w)
        v, w = v_new, w_new
        if increments and inc > increments[-1]:
            growth += 1
        else:
            growth = 0
        increments.append(inc)
        if not np.isfinite(inc):
            raise InnerDivergence("non-finite inner increment")
        if inc < params.tol_inner:
            break
        if growth >= 5:
            raise InnerDivergence(f"inner increments grew for 5 consecutive steps (last {inc:.3g})")
    return LinearSolution(v, w, k, inc, increments)


def transport_matrices(data: LinearData) -> tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray]:
    """Row-wise trapezoid recurrence of ``S`` as ``T w = A (r / a) + inflow``.

    Returns ``(T, A, inflow)`` acting on flattened scalar fields, so
    ``w = S(r)`` exactly when ``T w = A (r / a).ravel() + inflow``.
    """
    grid = data.grid
    m = grid.n + 1
    diff = sp.identity(m) - sp.eye(m, k=-1)
    avg = sp.eye(m) + sp.eye(m, k=-1)
    avg = sp.diags(np.r_[0.0, np.full(m - 1, 0.5 * grid.h)]) @ avg
    eye = sp.identity(m)
    inflow = np.zeros(grid.shape)
    inflow[0] = data.w_in
    return sp.kron(diff, eye, format="csr"), sp.kron(avg, eye, format="csr"), inflow.ravel()


def solve_coupled(data: LinearData, operator: MomentumOperator | None = None) -> LinearSolution:
    """One sparse LU solve for velocity and density together."""
    grid = data.grid
    op = operator or MomentumOperator(data)
    nv = op.matrix.shape[0]
    T, A, inflow = transport_matrices(data)
    A_over_a = A @ sp.diags(1.0 / data.a.ravel())
    mass_rows = sp.hstack([A_over_a @ divergence_matrix(grid), T])
    mass_rhs = A_over_a @ data.f.ravel() + inflow
    mom_rows = sp.hstack([op.matrix, -data.params.gamma * op.div_coupling])
    matrix = sp.vstack([mom_rows, mass_rows], format="csr")
    free = np.r_[op.free, np.ones(T.shape[0], dtype=bool)]
    system = ConstrainedSystem(matrix, free, np.zeros(matrix.shape[0]))
    x = system.solve(np.r_[op.base_load, mass_rhs])
    v = x[:nv].reshape((2,) + grid.shape)
    w = x[nv:].reshape(grid.shape)
    residual = float(np.linalg.norm(system.residual(x, np.r_[op.base_load, mass_rhs])))
    return LinearSolution(v, w, 1, residual, [], method="coupled")


def solve_monolithic_dense(data: LinearData) -> LinearSolution:
    """Dense Galerkin system with ``w = S(f - div v)`` substituted; small grids only."""
    grid = data.grid
    if grid.n > 32:
        raise ValueError("dense monolithic solve is meant for n <= 32")
    op = MomentumOperator(data)
    free = op.free
    idx = np.flatnonzero(free)
    K = op.matrix.toarray()[np.ix_(free, free)]
    G = op.div_coupling.toarray()[free]
    w0 = transport_S(data.f, data.w_in, data.a)
    zero_in = np.zeros_like(data.w_in)
    L = np.empty((grid.shape[0] ** 2, idx.size))
    unit = np.zeros(2 * op.space.nodes)
    for col, dof in enumerate(idx):
        unit[dof] = 1.0
        vfield = unit.reshape((2,) + grid.shape)
        L[:, col] = transport_S(-divergence(grid, vfield), zero_in, data.a).ravel()
        unit[dof] = 0.0
    gamma = data.params.gamma
    lhs = K - gamma * G @ L
    rhs = op.base_load[free] + gamma * G @ w0.ravel()
    try:
        x = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    v = np.zeros(2 * op.space.nodes)
    v[free] = x
    v = v.reshape((2,) + grid.shape)
    w = density_from_velocity(v, data)
    return LinearSolution(v, w, 1, 0.0)


def energy_terms(sol: LinearSolution, data: LinearData) -> dict[str, float]:
    """Each term of the weak momentum form tested with the solution itself."""
    params = data.params
    space = Q1Space(data.grid)
    v = sol.v.ravel()
    nodes = space.nodes
    ubar = 1.0 + data.fmap.psi2
    adv = space.weighted_advection(ubar)
    mass = space.mass()
    wall = space.wall_mass()
    v1, v2 = v[:nodes], v[nodes:]
    terms = {
        "advection": float(v1 @ adv @ v1 + v2 @ adv @ v2),
        "shear": float(v1 @ mass @ v2),
        "pressure": float(-params.gamma * (v @ space.divergence_coupling() @ sol.w.ravel())),
        "viscous": float(v @ space.viscous(params.mu, params.nu) @ v),
        "wall": float(params.alpha * (v1 @ wall @ v1)),
        "forcing": float(v @ space.vector_mass() @ data.g.ravel()),
        "wall_datum": float(v1 @ wall @ wall_field(data.grid, data.B_bottom, data.B_top).ravel()),
    }
    if params.upwind:
        terms["advection"] += float(
            v1 @ space.weighted_streamwise_diffusion(0.5 * data.grid.h * np.abs(ubar)) @ v1
            + v2 @ space.weighted_streamwise_diffusion(0.5 * data.grid.h * np.abs(ubar)) @ v2
        )
    lhs = sum(terms[k] for k in ("advection", "shear", "pressure", "viscous", "wall"))
    rhs = terms["forcing"] + terms["wall_datum"]
    terms["lhs"] = lhs
    terms["rhs"] = rhs
    return terms


def apriori_ratio(sol: LinearSolution, data: LinearData) -> float:
    """``(||v||_H1 + max-row L2 of w) / data_norm``; the constant of the H1 bound."""
    return (norm(data.grid, sol.v, "H1") + row_sup_l2(sol.w)) / data.data_norm()
