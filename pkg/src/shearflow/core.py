"""Uniform grid on the unit square, nodal fields, quadrature, differences and norms.

Fields are plain numpy arrays. A scalar field has shape ``(n+1, n+1)`` and is
indexed ``f[i, j]`` with ``i`` running along the first coordinate and ``j``
along the second. A vector field has shape ``(2, n+1, n+1)``. Gradients put
the derivative direction first: ``grad_fd(v)[k, c] = d v_c / d z_k``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError


INNER_SOLVERS = ("auto", "staggered", "coupled")


@dataclass(frozen=True)
class Params:
    mu: float = 1.0
    nu: float = 0.0
    gamma: float = 2.0
    alpha: float = 1.0
    p_norm: float = 4.0
    n: int = 64
    tol_inner: float = 1e-11
    tol_outer: float = 1e-8
    max_inner: int = 200
    max_outer: int = 50
    c_floor: float = 0.1
    j_floor: float = 0.5
    upwind: bool = False
    inner_solver: str = "auto"

    def __post_init__(self):
        checks = [
            (self.mu > 0, "mu must be positive"),
            (self.mu + self.nu >= 0, "mu + nu must be nonnegative"),
            (self.gamma > 1, "gamma must exceed 1"),
            (self.alpha >= 0, "alpha must be nonnegative"),
            (self.p_norm > 2, "p_norm must exceed 2"),
            (int(self.n) == self.n and self.n >= 4, "n must be an integer >= 4"),
            (0 < self.c_floor < 1, "c_floor must lie in (0, 1)"),
            (0 < self.j_floor < 1, "j_floor must lie in (0, 1)"),
            (self.tol_inner > 0 and self.tol_outer > 0, "tolerances must be positive"),
            (self.max_inner >= 1 and self.max_outer >= 1, "iteration caps must be >= 1"),
            (self.inner_solver in INNER_SOLVERS, f"inner_solver must be one of {INNER_SOLVERS}"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    @classmethod
    def from_dict(cls, data: dict) -> "Params":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown params keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **changes) -> "Params":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return Params(**values)

    @property
    def grid(self) -> "Grid":
        return Grid(self.n)


@dataclass(frozen=True)
class Grid:
    n: int
    h: float = field(init=False)
    coords: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "h", 1.0 / self.n)
        object.__setattr__(self, "coords", np.arange(self.n + 1) * (1.0 / self.n))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n + 1, self.n + 1)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(z1, z2)`` as two ``(n+1, n+1)`` arrays."""
        return np.meshgrid(self.coords, self.coords, indexing="ij")

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(z1, z2)`` at every node."""
        z1, z2 = self.mesh()
        return np.asarray(func(z1, z2), dtype=float)

    def zeros(self, components: int | None = None) -> np.ndarray:
        if components is None:
            return np.zeros(self.shape)
        return np.zeros((components,) + self.shape)


def grad_fd(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Second-order finite-difference gradient; one-sided second order at edges."""
    d1 = np.gradient(f, grid.h, axis=-2, edge_order=2)
    d2 = np.gradient(f, grid.h, axis=-1, edge_order=2)
    return np.stack([d1, d2])


def fd_matrix_1d(m: int, h: float) -> sp.csr_matrix:
    """Matrix of the 1-D ``grad_fd`` stencil on ``m + 1`` nodes."""
    d = sp.lil_matrix((m + 1, m + 1))
    for r in range(1, m):
        d[r, r - 1], d[r, r + 1] = -0.5 / h, 0.5 / h
    d[0, 0], d[0, 1], d[0, 2] = -1.5 / h, 2.0 / h, -0.5 / h
    d[m, m], d[m, m - 1], d[m, m - 2] = 1.5 / h, -2.0 / h, 0.5 / h
    return d.tocsr()


def divergence_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse form of ``divergence`` acting on a flattened vector field."""
    d = fd_matrix_1d(grid.n, grid.h)
    eye = sp.identity(grid.n + 1, format="csr")
    return sp.hstack([sp.kron(d, eye), sp.kron(eye, d)], format="csr")


def hessian_fd(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Nested ``grad_fd``; ``out[k, m] = d_k d_m f`` on every node."""
    g = grad_fd(grid, f)
    return np.stack([grad_fd(grid, g[m]) for m in range(2)], axis=1)


def divergence(grid: Grid, v: np.ndarray) -> np.ndarray:
    return np.gradient(v[0], grid.h, axis=0, edge_order=2) + np.gradient(
        v[1], grid.h, axis=1, edge_order=2
    )


def laplacian_fd(grid: Grid, f: np.ndarray) -> np.ndarray:
    hess = hessian_fd(grid, f)
    return hess[0, 0] + hess[1, 1]


def second_differences(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Centered second differences on interior nodes, shape ``(2, 2, ..., n-1, n-1)``."""
    h2 = grid.h**2
    c = f[..., 1:-1, 1:-1]
    d11 = (f[..., 2:, 1:-1] - 2 * c + f[..., :-2, 1:-1]) / h2
    d22 = (f[..., 1:-1, 2:] - 2 * c + f[..., 1:-1, :-2]) / h2
    d12 = (f[..., 2:, 2:] - f[..., 2:, :-2] - f[..., :-2, 2:] + f[..., :-2, :-2]) / (4 * h2)
    return np.stack([np.stack([d11, d12]), np.stack([d12, d22])])


def trapezoid_weights(m: int, h: float) -> np.ndarray:
    w = np.full(m + 1, h)
    w[0] = w[-1] = h / 2
    return w


def integrate(grid: Grid, f: np.ndarray) -> float:
    """Composite trapezoid rule over all cells."""
    w = trapezoid_weights(grid.n, grid.h)
    return float(w @ f @ w)


def magnitude(f: np.ndarray, rank: int) -> np.ndarray:
    """Pointwise Euclidean (Frobenius) magnitude over the ``rank`` leading axes."""
    if rank == 0:
        return np.abs(f)
    axes = tuple(range(rank))
    return np.sqrt(np.sum(f * f, axis=axes))


def _rank(grid: Grid, f: np.ndarray) -> int:
    rank = f.ndim - 2
    if rank < 0 or f.shape[-2:] != grid.shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shape}")
    return rank


def _lp(grid: Grid, mag: np.ndarray, p: float) -> float:
    return integrate(grid, mag**p) ** (1.0 / p)


def norm(grid: Grid, f: np.ndarray, kind: str = "L2", p: float = 2.0) -> float:
    """Discrete norm of a scalar or vector field.

    ``kind`` is one of ``"Lp"``, ``"L2"``, ``"Lsup"``, ``"H1"``, ``"W1p"``,
    ``"W2p_discrete"``. Sobolev norms are sums of the Lebesgue norms of each
    derivative order (H1 is the Hilbert combination); the second-order part of
    ``W2p_discrete`` only sees interior nodes.
    """
    rank = _rank(grid, f)
    if kind == "L2":
        return _lp(grid, magnitude(f, rank), 2.0)
    if kind == "Lp":
        return _lp(grid, magnitude(f, rank), p)
    if kind == "Lsup":
        return float(np.max(magnitude(f, rank)))
    grad = grad_fd(grid, f)
    if kind == "H1":
        l2 = _lp(grid, magnitude(f, rank), 2.0)
        g2 = _lp(grid, magnitude(grad, rank + 1), 2.0)
        return math.hypot(l2, g2)
    first = _lp(grid, magnitude(f, rank), p) + _lp(grid, magnitude(grad, rank + 1), p)
    if kind == "W1p":
        return first
    if kind == "W2p_discrete":
        sec = magnitude(second_differences(grid, f), rank + 2)
        return first + float(np.sum(sec**p) * grid.h**2) ** (1.0 / p)
    raise ValueError(f"unknown norm kind {kind!r}")


# -- boundary profiles -------------------------------------------------------


def slobodeckij_seminorm(values: np.ndarray, s: float, p: float) -> float:
    """Double-sum quadrature of the Sobolev-Slobodeckij seminorm on [0, 1].

    Node pairs with trapezoid weights; the diagonal is excluded.
    """
    m = len(values) - 1
    t = np.linspace(0.0, 1.0, m + 1)
    w = trapezoid_weights(m, 1.0 / m)
    diff = np.abs(values[:, None] - values[None, :]) ** p
    dist = np.abs(t[:, None] - t[None, :])
    np.fill_diagonal(dist, 1.0)
    kernel = diff / dist ** (1.0 + s * p)
    np.fill_diagonal(kernel, 0.0)
    return float(w @ kernel @ w) ** (1.0 / p)


def boundary_norm(values, kind: str = "Lp", p: float = 2.0, order: float | None = None) -> float:
    """Norm of a profile sampled at the ``m+1`` nodes of one side of the square.

    ``kind="frac"`` needs ``order`` (e.g. ``2 - 1/p``): the integer part is
    measured as ``W^{k,p}`` and the Slobodeckij seminorm of the k-th derivative
    is added with ``s = order - k``.
    """
    values = np.asarray(values, dtype=float)
    m = len(values) - 1
    h = 1.0 / m
    w = trapezoid_weights(m, h)

    def lp(f):
        return float(w @ np.abs(f) ** p) ** (1.0 / p)

    if kind == "Lp":
        return lp(values)
    if kind == "W1p":
        return lp(values) + lp(np.gradient(values, h, edge_order=2))
    if kind == "frac":
        if order is None or order <= 0:
            raise ValueError("frac norm needs a positive order")
        k = int(math.floor(order))
        s = order - k
        if not 0 < s < 1:
            raise ValueError("frac norm needs a non-integer order")
        total = lp(values)
        deriv = values
        for _ in range(k):
            deriv = np.gradient(deriv, h, edge_order=2)
            total += lp(deriv)
        return total + slobodeckij_seminorm(deriv, s, p)
    raise ValueError(f"unknown boundary norm kind {kind!r}")


# -- interpolation -----------------------------------------------------------


def interpolate(grid: Grid, f: np.ndarray, x1, x2) -> np.ndarray:
    """Bilinear interpolation of a nodal field; query points clamped to the square."""
    x1 = np.clip(np.asarray(x1, dtype=float), 0.0, 1.0)
    x2 = np.clip(np.asarray(x2, dtype=float), 0.0, 1.0)
    x1, x2 = np.broadcast_arrays(x1, x2)
    pts = np.stack([x1.ravel(), x2.ravel()], axis=-1)
    lead = f.shape[:-2]
    flat = f.reshape((-1,) + grid.shape)
    out = np.empty((flat.shape[0], pts.shape[0]))
    for k, comp in enumerate(flat):
        interp = RegularGridInterpolator((grid.coords, grid.coords), comp, method="linear")
        out[k] = interp(pts)
    return out.reshape(lead + x1.shape)


# -- CSV dumps ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def write_columns_csv(
    path, grid: Grid, columns: dict[str, np.ndarray], coords: tuple[str, str] = ("z1", "z2")
) -> None:
    """Write nodal columns row-major in ``j`` then ``i`` with two leading coordinate columns."""
    z1, z2 = grid.mesh()
    names = [*coords, *columns]
    arrays = [z1, z2, *columns.values()]
    flat = [a.T.ravel() for a in arrays]
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*flat):
            writer.writerow([_fmt(x) for x in row])


def write_field_csv(path, grid: Grid, f: np.ndarray) -> None:
    if f.ndim == 2:
        write_columns_csv(path, grid, {"value": f})
    else:
        write_columns_csv(path, grid, {"v1": f[0], "v2": f[1]})


def read_field_csv(path) -> tuple[Grid, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names
    m = int(round(math.sqrt(len(data)))) - 1
    grid = Grid(m)
    cols = [np.asarray(data[name]).reshape(grid.shape).T for name in names[2:]]
    return grid, cols[0] if len(cols) == 1 else np.stack(cols)


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.15g}"
    return str(x)


def write_table_csv(path, header: list[str], rows: list[dict]) -> None:
    """Comma-separated table, one header row, floats at 15 significant digits."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(row.get(key)) for key in header])
