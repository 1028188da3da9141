"""Outer fixed-point iteration for the perturbation ``(v, w)`` of the shear flow.

Each step freezes the current iterate, rebuilds the flow-aligned map from the
velocity ``v^n + u_tilde``, evaluates the nonlinear sources in the new
coordinates and solves the linear problem for ``(v^{n+1}, w^{n+1})``.

Coordinates: ``v`` and ``w`` are stored on the z-grid of the map they were
computed in. The lift ``u_tilde`` lives on the x-grid and is composed with
``psi`` wherever it meets z-fields.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .background import (
    WALL_NORMALS,
    BoundarySpec,
    LiftResult,
    compute_D0,
    shear_velocity,
    solve_lame_lift,
)
from .core import Grid, Params, divergence, grad_fd, norm
from .errors import OuterDivergence, PressureDomain, SolverError, with_step
from .linsolve import LinearData, MomentumOperator, density_from_velocity, solve_linear_system
from .transform import (
    FlowMap,
    apply_R,
    build_flowmap,
    check_diffeo,
    compose,
    identity_flowmap,
    resample_to_x,
    tilde_v,
)

logger = logging.getLogger(__name__)


def _dot_grad(a: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """``(a . grad) b`` from ``grad[k, c] = d_k b_c``."""
    return np.einsum("k...,kc...->c...", a, grad)


def _shear_conv(a: np.ndarray) -> np.ndarray:
    """``a . grad U0 = (a_2, 0)``."""
    return np.stack([a[1], np.zeros_like(a[1])])


@dataclass
class IterationState:
    v: np.ndarray
    w: np.ndarray
    dz1_w: np.ndarray
    fmap: FlowMap
    norms: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, grid: Grid) -> "IterationState":
        return cls(grid.zeros(2), grid.zeros(), grid.zeros(), identity_flowmap(grid))

    @property
    def grid(self) -> Grid:
        return self.fmap.grid


@dataclass
class IterationLog:
    records: list[dict] = field(default_factory=list)

    def append(self, record: dict) -> None:
        self.records.append(record)

    @property
    def ratios(self) -> list[float]:
        return [r["ratio"] for r in self.records if r["ratio"] is not None]

    @property
    def deltas(self) -> list[float]:
        return [r["delta"] for r in self.records]

    def to_json(self) -> list[dict]:
        return [dict(r) for r in self.records]


@dataclass
class Solution:
    state: IterationState
    lift: LiftResult
    converged: bool
    steps: int
    D0: float

    @property
    def v(self) -> np.ndarray:
        return self.state.v

    @property
    def w(self) -> np.ndarray:
        return self.state.w

    @property
    def fmap(self) -> FlowMap:
        return self.state.fmap


def state_norms(state: IterationState, params: Params) -> dict[str, float]:
    grid, p = state.grid, params.p_norm
    return {
        "norm_v_h1": norm(grid, state.v, "H1"),
        "norm_v_w2p": norm(grid, state.v, "W2p_discrete", p),
        "norm_w_lp": norm(grid, state.w, "Lp", p),
        "norm_w_w1p": norm(grid, state.w, "W1p", p),
        "norm_dz1w_w1p": norm(grid, state.dz1_w, "W1p", p),
    }


def solution_norm(state: IterationState, params: Params) -> float:
    """``||v||_{W2p-discrete} + ||w||_{W1p}``, the norm of the contraction argument."""
    grid, p = state.grid, params.p_norm
    return norm(grid, state.v, "W2p_discrete", p) + norm(grid, state.w, "W1p", p)


def transport_velocity(state: IterationState, lift: LiftResult) -> np.ndarray:
    """``v^n + u_tilde`` on the x-grid; ``v^n`` is resampled through its own map."""
    return resample_to_x(state.fmap, state.v) + lift.u_tilde


def advance_map(state: IterationState, lift: LiftResult, params: Params) -> tuple[FlowMap, np.ndarray]:
    v_bar = transport_velocity(state, lift)
    return build_flowmap(tilde_v(v_bar, params), params), v_bar


def compute_sources(
    state: IterationState, lift: LiftResult, params: Params, fmap: FlowMap | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Nonlinear sources ``(F_tilde, G_tilde)`` at the nodes of ``fmap`` (default ``state.fmap``)."""
    fmap = fmap or state.fmap
    grid = fmap.grid
    v, w = state.v, state.w
    if np.min(w) <= -1.0:
        raise PressureDomain(f"density perturbation reached {np.min(w):.3g}")
    mu, nu, gamma = params.mu, params.nu, params.gamma

    ut = compose(fmap, lift.u_tilde)
    gut = compose(fmap, lift.grad)
    lap_ut = compose(fmap, lift.laplacian)
    gdiv_ut = compose(fmap, lift.grad_div)
    div_ut = gut[0, 0] + gut[1, 1]
    U0 = np.stack([1.0 + fmap.psi2, np.zeros(grid.shape)])

    gv_z = grad_fd(grid, v)
    gv = fmap.x_gradient(gv_z)
    div_v = gv[0, 0] + gv[1, 1]
    gw_z = np.stack([state.dz1_w, grad_fd(grid, w)[1]])
    gw = fmap.x_gradient(gw_z)

    F = -div_ut - w * (div_v + div_ut)
    G = (
        -(w + 1) * _dot_grad(v + ut + U0, gut)
        - (w + 1) * _dot_grad(v + ut, gv)
        - w * _dot_grad(U0, gv)
        - _shear_conv(ut)
        - w * _shear_conv(v + ut)
        + mu * lap_ut
        + (mu + nu) * gdiv_ut
        - gamma * ((w + 1) ** (gamma - 1) - 1) * gw
    )
    if fmap.is_identity:
        return F, G
    F_t = F - apply_R(v, "div", fmap)
    G_t = (
        G
        - U0[0] * apply_R(v, "d1", fmap)
        - gamma * apply_R(w, "grad", fmap, zgrad=gw_z)
        + mu * apply_R(v, "laplacian", fmap)
        + (mu + nu) * apply_R(v, "grad_div", fmap)
    )
    return F_t, G_t


def compute_Btilde(
    state: IterationState, spec: BoundarySpec, params: Params, fmap: FlowMap | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Wall data ``B - 2 mu n.R(v, D).tau`` for the bottom and top walls."""
    fmap = fmap or state.fmap
    pert = spec.perturbation(params)
    bottom, top = pert["b_bottom"].copy(), pert["b_top"].copy()
    if fmap.is_identity:
        return bottom, top
    R12 = apply_R(state.v, "sym_grad", fmap)[1, 0]
    n = fmap.grid.n
    bottom -= 2 * params.mu * WALL_NORMALS["bottom"] * R12[:, 0]
    top -= 2 * params.mu * WALL_NORMALS["top"] * R12[:, n]
    return bottom, top


def linear_data(
    state: IterationState, spec: BoundarySpec, lift: LiftResult, params: Params
) -> LinearData:
    """Linear problem whose solution is the next iterate."""
    fmap, v_bar = advance_map(state, lift, params)
    f, g = compute_sources(state, lift, params, fmap)
    b_bottom, b_top = compute_Btilde(state, spec, params, fmap)
    return LinearData(f, g, b_bottom, b_top, spec.rho_in - 1.0, fmap, v_bar, params)


def picard_step(
    state: IterationState, spec: BoundarySpec, lift: LiftResult, params: Params
) -> tuple[IterationState, dict]:
    """One outer step; returns the new state and the inner-solve statistics."""
    data = linear_data(state, spec, lift, params)
    sol = solve_linear_system(data)
    dz1_w = (data.f - divergence(data.grid, sol.v)) / data.a
    new = IterationState(sol.v, sol.w, dz1_w, data.fmap)
    new.norms = state_norms(new, params)
    stats = {
        "inner_iters": sol.inner_iterations,
        "inner_residual": sol.inner_residual,
        "inner_method": sol.method,
    }
    return new, stats


def increment(new: IterationState, old: IterationState, params: Params) -> float:
    grid, p = new.grid, params.p_norm
    return norm(grid, new.v - old.v, "W2p_discrete", p) + norm(grid, new.w - old.w, "W1p", p)


def run_picard(
    spec: BoundarySpec,
    params: Params,
    lift: LiftResult | None = None,
    log: IterationLog | None = None,
) -> tuple[Solution, IterationLog]:
    """Iterate from ``(0, 0)`` until the increment drops below ``tol_outer``.

    ``log`` may be supplied by the caller so that it survives an exception.
    Raises ``OuterDivergence`` after three consecutive increment ratios above 1.
    """
    lift = lift or solve_lame_lift(spec, params)
    log = log if log is not None else IterationLog()
    D0 = compute_D0(spec, params)
    state = IterationState.initial(params.grid)
    prev_delta = None
    above = 0
    converged = False
    step = 0
    for step in range(1, params.max_outer + 1):
        try:
            new, stats = picard_step(state, spec, lift, params)
        except SolverError as exc:
            raise with_step(exc, step) from exc
        delta = increment(new, state, params)
        ratio = None if prev_delta is None or prev_delta == 0 else delta / prev_delta
        diffeo = check_diffeo(new.fmap, params)
        log.append(
            {
                "step": step,
                "norm_v_h1": new.norms["norm_v_h1"],
                "norm_v_w2p": new.norms["norm_v_w2p"],
                "norm_w_lp": new.norms["norm_w_lp"],
                "norm_w_w1p": new.norms["norm_w_w1p"],
                "norm_dz1w_w1p": new.norms["norm_dz1w_w1p"],
                "delta": delta,
                "ratio": ratio,
                "minJ": diffeo["min_J"],
                "norm_E_w1p": diffeo["norm_E_w1p"],
                **stats,
            }
        )
        logger.info("step %d: delta %.3e ratio %s minJ %.4f", step, delta, ratio, diffeo["min_J"])
        state = new
        if not math.isfinite(delta):
            raise OuterDivergence("non-finite increment", step=step)
        if delta < params.tol_outer:
            converged = True
            break
        above = above + 1 if ratio is not None and ratio > 1 else 0
        if above >= 3:
            raise OuterDivergence(
                f"increment ratio above 1 for 3 consecutive steps (last {ratio:.3g})", step=step
            )
        prev_delta = delta
    return Solution(state, lift, converged, step, D0), log


# -- reconstruction and residuals --------------------------------------------


def reconstruct_x(solution: Solution) -> tuple[np.ndarray, np.ndarray]:
    """``u = v + u_tilde + U0`` and ``rho = 1 + w`` on the uniform x-grid."""
    fmap = solution.fmap
    grid = fmap.grid
    v_x = resample_to_x(fmap, solution.v)
    w_x = resample_to_x(fmap, solution.w)
    return v_x + solution.lift.u_tilde + shear_velocity(grid), 1.0 + w_x


def fixed_point_residual(solution: Solution, spec: BoundarySpec, params: Params) -> dict[str, float]:
    """How far the final iterate is from reproducing itself under one more step.

    ``mass`` is the L2 norm of ``w - S(F_tilde - div v)``; ``momentum`` is the
    Euclidean norm of the Galerkin residual on free dofs divided by ``h``,
    which scales like an L2 norm of the strong residual.
    """
    data = linear_data(solution.state, spec, solution.lift, params)
    grid = data.grid
    mass = norm(grid, solution.w - density_from_velocity(solution.v, data), "L2")
    op = MomentumOperator(data)
    mom = float(np.linalg.norm(op.residual(solution.v, solution.w))) / grid.h
    return {"mass": mass, "momentum": mom, "combined": mass + mom}


def _interior_lp(f: np.ndarray, grid: Grid, p: float, margin: int = 1) -> float:
    inner = f[..., margin:-margin, margin:-margin]
    rank = inner.ndim - 2
    mag = np.sqrt(np.sum(inner**2, axis=tuple(range(rank)))) if rank else np.abs(inner)
    return float(np.sum(mag**p) * grid.h**2) ** (1.0 / p)


def strong_residuals(solution: Solution, spec: BoundarySpec, params: Params) -> dict[str, np.ndarray]:
    """Nodal strong-form residual fields by finite differences.

    ``z_mass``/``z_momentum`` belong to the transformed system at the final
    map, ``x_mass``/``x_momentum`` to the original equations for the
    reconstructed ``(u, rho)``; ``wall_bottom``/``wall_top`` are the Navier
    condition residuals along the walls.
    """
    grid = solution.fmap.grid
    mu, nu, gamma = params.mu, params.nu, params.gamma
    state = solution.state
    data = linear_data(state, spec, solution.lift, params)
    v, w = state.v, state.w
    gv = grad_fd(grid, v)
    gw = grad_fd(grid, w)
    hv = np.stack([grad_fd(grid, gv[m]) for m in range(2)], axis=1)
    out = {
        "z_mass": data.a * gw[0] + gv[0, 0] + gv[1, 1] - data.f,
        "z_momentum": (
            (1.0 + data.fmap.psi2) * gv[0]
            + _shear_conv(v)
            + gamma * gw
            - mu * (hv[0, 0] + hv[1, 1])
            - (mu + nu) * (hv[:, 0, 0] + hv[:, 1, 1])
            - data.g
        ),
    }
    u, rho = reconstruct_x(solution)
    m = rho * u
    gm = grad_fd(grid, m)
    flux = np.einsum("a...,b...->ab...", m, u)  # flux[k, c] = rho u_k u_c
    div_flux = np.stack([grad_fd(grid, flux[0, c])[0] + grad_fd(grid, flux[1, c])[1] for c in range(2)])
    gu = grad_fd(grid, u)
    hu = np.stack([grad_fd(grid, gu[k]) for k in range(2)], axis=1)
    out["x_mass"] = gm[0, 0] + gm[1, 1]
    out["x_momentum"] = (
        div_flux
        - mu * (hu[0, 0] + hu[1, 1])
        - (mu + nu) * (hu[:, 0, 0] + hu[:, 1, 1])
        + grad_fd(grid, rho**gamma)
    )
    d12 = 0.5 * (gu[0, 1] + gu[1, 0])
    for name, j, b in (("bottom", 0, spec.b_bottom), ("top", grid.n, spec.b_top)):
        out[f"wall_{name}"] = 2 * mu * WALL_NORMALS[name] * d12[:, j] + params.alpha * u[0, :, j] - b
    return out


def nonlinear_residual(solution: Solution, spec: BoundarySpec, params: Params) -> dict[str, float]:
    """Lp norms of :func:`strong_residuals` over interior nodes.

    Keys ending in ``_core`` skip a band of width 1/8 along the boundary, where
    differencing a bilinear solution (and any corner singularity of the lift)
    dominates. ``x_wall`` sums the trapezoid Lp norms along both walls.
    """
    grid = solution.fmap.grid
    p = params.p_norm
    res = strong_residuals(solution, spec, params)
    k = max(1, grid.n // 8)
    core = slice(k, grid.n + 1 - k)
    w1 = np.full(grid.n + 1, grid.h)
    w1[0] = w1[-1] = grid.h / 2
    report = {}
    for name in ("z_mass", "z_momentum", "x_mass", "x_momentum"):
        report[name] = _interior_lp(res[name], grid, p)
        report[name + "_core"] = _interior_lp(res[name], grid, p, k)
    walls = [np.abs(res["wall_bottom"]), np.abs(res["wall_top"])]
    report["x_wall"] = sum(float(w1 @ r**p) ** (1.0 / p) for r in walls)
    report["x_wall_core"] = sum(float(w1[core] @ r[core] ** p) ** (1.0 / p) for r in walls)
    return report
