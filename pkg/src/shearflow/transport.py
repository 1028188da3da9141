"""Explicit solution of the transformed continuity equation along ``z1``-lines.

In flow-aligned coordinates the density perturbation solves
``a(z) d_z1 w = rhs`` with ``w(0, z2) = w_in(z2)``, so

    w(z1, z2) = w_in(z2) + int_0^z1 rhs / a (t, z2) dt,

evaluated with the cumulative trapezoid rule on each row.
"""

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .core import Params
from .errors import DegenerateFlow
from .transform import FlowMap, compose


def coeff_a(fmap: FlowMap, v_bar: np.ndarray, params: Params) -> np.ndarray:
    """Transport speed ``(Ubar + v_bar_1) o psi = 1 + psi2 + v_bar_1(psi)``."""
    a = 1.0 + fmap.psi2 + compose(fmap, v_bar[0])
    if a.min() < params.c_floor:
        raise DegenerateFlow(f"transport speed {a.min():.3g} below c_floor = {params.c_floor}")
    return a


def transport_S(rhs: np.ndarray, w_in: np.ndarray, a: np.ndarray) -> np.ndarray:
    h = 1.0 / (rhs.shape[0] - 1)
    return w_in[None, :] + cumulative_trapezoid(rhs / a, dx=h, axis=0, initial=0.0)


def row_sup_l2(w: np.ndarray) -> float:
    """``max_z1 ||w(z1, .)||_L2`` with the trapezoid rule in ``z2``."""
    m = w.shape[1] - 1
    weights = np.full(m + 1, 1.0 / m)
    weights[0] = weights[-1] = 0.5 / m
    return float(np.sqrt(np.max((w * w) @ weights)))
