"""Flow-aligned change of variables ``x = psi(z)``.

``psi`` keeps ``x1 = z1`` and bends each grid row ``z2 = const`` into the
streamline of the slope field ``v_tilde = u2 / (Ubar + u1)`` that starts at
``(0, z2)``. In the new coordinates the transport operator
``(Ubar + u1) d_x1 + u2 d_x2`` becomes ``(Ubar + u1) d_z1``.

Jacobian bookkeeping: ``grad psi = Id + E`` with ``E21 = d psi2 / d z1`` and
``E22 = d psi2 / d z2 - 1``; the inverse is ``Id + Etilde``. Derivatives
convert through ``d_x1 = d_z1 + Et21 d_z2`` and ``d_x2 = (1 + Et22) d_z2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import Grid, Params, grad_fd, hessian_fd, interpolate, norm, write_columns_csv
from .errors import DegenerateFlow, DiffeoFailure, InversionFailure


class TildeV:
    """Nodal slope field with bilinear off-node evaluation (clamped to the square)."""

    def __init__(self, grid: Grid, values: np.ndarray, denom: np.ndarray):
        self.grid = grid
        self.values = values
        self.denom = denom
        self.grad = grad_fd(grid, values)
        axes = (grid.coords, grid.coords)
        self._value = RegularGridInterpolator(axes, values)
        self._d2 = RegularGridInterpolator(axes, self.grad[1])

    def _points(self, x1, x2):
        x2 = np.clip(x2, 0.0, 1.0)
        x1 = np.broadcast_to(np.clip(x1, 0.0, 1.0), np.shape(x2))
        return np.stack([x1, x2], axis=-1)

    def __call__(self, x1, x2):
        return self._value(self._points(x1, x2))

    def d2(self, x1, x2):
        """``d v_tilde / d x2`` from the interpolated nodal gradient."""
        return self._d2(self._points(x1, x2))


def tilde_v(v_plus_u: np.ndarray, params: Params) -> TildeV:
    grid = Grid(v_plus_u.shape[-1] - 1)
    z1, z2 = grid.mesh()
    denom = 1.0 + z2 + v_plus_u[0]
    if denom.min() < params.c_floor:
        raise DegenerateFlow(
            f"Ubar + u1 reaches {denom.min():.3g} < c_floor = {params.c_floor}"
        )
    return TildeV(grid, v_plus_u[1] / denom, denom)


@dataclass
class FlowMap:
    grid: Grid
    psi2: np.ndarray
    E21: np.ndarray
    E22: np.ndarray
    tv: TildeV | None = None

    def __post_init__(self):
        self.J = 1.0 + self.E22
        self.Et21 = -self.E21 / self.J
        self.Et22 = 1.0 / self.J - 1.0
        self.dE21 = grad_fd(self.grid, self.E21)
        self.dE22 = grad_fd(self.grid, self.E22)
        self.dEt21 = grad_fd(self.grid, self.Et21)
        self.dEt22 = grad_fd(self.grid, self.Et22)

    @property
    def c_min(self) -> float:
        if self.tv is None:
            return float("nan")
        return float(compose(self, self.tv.denom).min())

    @property
    def is_identity(self) -> bool:
        return not (np.any(self.E21) or np.any(self.E22))

    def x_gradient(self, zgrad: np.ndarray) -> np.ndarray:
        """Convert ``(d_z1 f, d_z2 f)`` into ``(d_x1 f, d_x2 f)``."""
        return np.stack([zgrad[0] + self.Et21 * zgrad[1], (1.0 + self.Et22) * zgrad[1]])

    def x_hessian(self, zgrad: np.ndarray, zhess: np.ndarray) -> np.ndarray:
        """Second x-derivatives from z-derivatives by the chain rule.

        ``Hx[k, m] = P_ki P_mj Hz[i, j] + P_ki (d_zi P_mj) d_zj f`` with
        ``P = (Id + Etilde)^T``.
        """
        one = np.ones_like(self.Et21)
        zero = np.zeros_like(self.Et21)
        P = [[one, self.Et21], [zero, 1.0 + self.Et22]]
        dP = [[[zero, zero], [self.dEt21[0], self.dEt21[1]]],
              [[zero, zero], [self.dEt22[0], self.dEt22[1]]]]
        # dP[m][j][i] = d_zi P_mj
        shape = (2, 2) + zgrad.shape[1:]
        out = np.zeros(shape)
        for k in range(2):
            for m in range(2):
                acc = np.zeros(zgrad.shape[1:])
                for i in range(2):
                    for j in range(2):
                        acc = acc + _bcast(P[k][i] * P[m][j], acc) * zhess[i, j]
                        acc = acc + _bcast(P[k][i] * dP[m][j][i], acc) * zgrad[j]
                out[k, m] = acc
        return out

    def dump(self, path) -> None:
        write_columns_csv(
            path, self.grid, {"psi2": self.psi2, "E21": self.E21, "E22": self.E22, "J": self.J}
        )


def _bcast(coef: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Broadcast a scalar-field coefficient over leading component axes."""
    return coef.reshape((1,) * (target.ndim - coef.ndim) + coef.shape)


def integrate_rows(tv: TildeV) -> tuple[np.ndarray, np.ndarray]:
    """RK4 at step h for every row: streamline ``psi2`` and variational factor ``q``."""
    grid = tv.grid
    n, h = grid.n, grid.h
    psi = grid.coords.copy()
    q = np.ones(n + 1)
    psi2 = np.empty(grid.shape)
    qs = np.empty(grid.shape)
    psi2[0], qs[0] = psi, q

    def rhs(t, y, r):
        return tv(t, y), tv.d2(t, y) * r

    for i in range(n):
        t = i * h
        k1y, k1q = rhs(t, psi, q)
        k2y, k2q = rhs(t + h / 2, psi + h / 2 * k1y, q + h / 2 * k1q)
        k3y, k3q = rhs(t + h / 2, psi + h / 2 * k2y, q + h / 2 * k2q)
        k4y, k4q = rhs(t + h, psi + h * k3y, q + h * k3q)
        psi = psi + h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
        q = q + h / 6 * (k1q + 2 * k2q + 2 * k3q + k4q)
        psi2[i + 1], qs[i + 1] = psi, q
    return psi2, qs


def build_flowmap(tv: TildeV, params: Params) -> FlowMap:
    """Integrate every row's streamline and its variational equation, then validate."""
    grid = tv.grid
    psi2, qs = integrate_rows(tv)
    excess = max(-psi2.min(), psi2.max() - 1.0)
    if excess > grid.h**2:
        raise DiffeoFailure(f"streamlines leave the square by {excess:.3g}")
    psi2 = np.clip(psi2, 0.0, 1.0)
    if qs.min() < params.j_floor:
        raise DiffeoFailure(f"Jacobian determinant {qs.min():.3g} below j_floor = {params.j_floor}")
    z1, _ = grid.mesh()
    E21 = tv(z1, psi2)
    return FlowMap(grid, psi2, E21, qs - 1.0, tv)


def identity_flowmap(grid: Grid) -> FlowMap:
    z1, z2 = grid.mesh()
    return FlowMap(grid, z2.copy(), np.zeros(grid.shape), np.zeros(grid.shape))


def compose(fmap: FlowMap, f: np.ndarray) -> np.ndarray:
    """Evaluate an x-grid field at ``psi(z)`` for every z-node."""
    if fmap.is_identity:
        return f.copy()
    z1, _ = fmap.grid.mesh()
    return interpolate(fmap.grid, f, z1, fmap.psi2)


def invert_rows(fmap: FlowMap, x2: np.ndarray | None = None) -> np.ndarray:
    """For each column ``z1``, the ``z2`` with ``psi2(z1, z2) = x2``.

    ``psi2`` is taken piecewise linear in ``z2`` between nodes, so the inverse
    is exact for that interpolant. Returns shape ``(n+1, len(x2))``.
    """
    grid = fmap.grid
    if x2 is None:
        x2 = grid.coords
    steps = np.diff(fmap.psi2, axis=1)
    if np.any(steps <= 0):
        raise InversionFailure("psi2 is not strictly increasing along a column")
    return np.stack([np.interp(x2, col, grid.coords) for col in fmap.psi2])


def resample_to_x(fmap: FlowMap, f: np.ndarray) -> np.ndarray:
    """Values of a z-field ``f`` at the x-grid nodes, ``f(psi^{-1}(x))``.

    Each column is interpolated linearly in ``z2`` at the inverted
    positions; since ``x1 = z1`` the bilinear interpolant reduces to this.
    """
    if fmap.is_identity:
        return f.copy()
    zq = invert_rows(fmap)
    lead = f.shape[:-2]
    flat = f.reshape((-1,) + fmap.grid.shape)
    coords = fmap.grid.coords
    out = np.stack([[np.interp(zq[i], coords, comp[i]) for i in range(comp.shape[0])] for comp in flat])
    return out.reshape(lead + fmap.grid.shape)


def apply_R(f: np.ndarray, op_kind: str, fmap: FlowMap, zgrad: np.ndarray | None = None) -> np.ndarray:
    """``D_x f - D_z f`` for a nodal z-field ``f``.

    ``op_kind`` is one of ``d1``, ``d2``, ``grad``, ``div``, ``laplacian``,
    ``grad_div``, ``sym_grad``. For scalar fields ``zgrad`` may supply the
    z-gradient (e.g. with a reconstructed ``d_z1``) instead of ``grad_fd``.
    Gradients use ``out[k, c] = d_k f_c``.
    """
    grid = fmap.grid
    if zgrad is None:
        zgrad = grad_fd(grid, f)
    if op_kind in ("d1", "d2", "grad", "div", "sym_grad"):
        R = fmap.x_gradient(zgrad) - zgrad
        if op_kind == "d1":
            return R[0]
        if op_kind == "d2":
            return R[1]
        if op_kind == "grad":
            return R
        if op_kind == "div":
            return R[0, 0] + R[1, 1]
        return 0.5 * (R + np.swapaxes(R, 0, 1))
    zhess = hessian_fd(grid, f)
    R2 = fmap.x_hessian(zgrad, zhess) - zhess
    if op_kind == "laplacian":
        return R2[0, 0] + R2[1, 1]
    if op_kind == "grad_div":
        return R2[:, 0, 0] + R2[:, 1, 1]
    raise ValueError(f"unknown operator kind {op_kind!r}")


def x_gradient(f: np.ndarray, fmap: FlowMap) -> np.ndarray:
    return fmap.x_gradient(grad_fd(fmap.grid, f))


def check_diffeo(fmap: FlowMap, params: Params) -> dict:
    E = np.stack([fmap.E21, fmap.E22])
    report = {
        "min_J": float(fmap.J.min()),
        "max_abs_E": float(np.abs(E).max()),
        "norm_E_w1p": norm(fmap.grid, E, "W1p", params.p_norm),
        "norm_Etilde_w1p": norm(fmap.grid, np.stack([fmap.Et21, fmap.Et22]), "W1p", params.p_norm),
    }
    report["passed"] = report["min_J"] >= params.j_floor
    return report
