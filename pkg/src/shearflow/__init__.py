"""Finite-element solver for steady compressible flow near the shear flow ``(1 + x2, 0)``."""

from .background import BoundarySpec, compute_D0, solve_lame_lift
from .config import RunConfig
from .core import Grid, Params, norm
from .linsolve import LinearData, solve_linear_system
from .picard import nonlinear_residual, reconstruct_x, run_picard

__all__ = [
    "BoundarySpec",
    "Grid",
    "LinearData",
    "Params",
    "RunConfig",
    "compute_D0",
    "nonlinear_residual",
    "norm",
    "reconstruct_x",
    "run_picard",
    "solve_lame_lift",
    "solve_linear_system",
]
