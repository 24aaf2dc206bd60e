"""Multigrid-preconditioned conjugate gradient for Poisson problems on graded octrees."""

from .grid import AdaptiveGrid, CellIndex, TileCoord, TileKind, build_grid, coarse_neighbor, leaf_cells
from .hierarchy import TransferConfig, build_hierarchy, coarsen_coeffs
from .operator import (
    BoundaryPolicy,
    CellCoeffs,
    CellKind,
    PoissonSystem,
    WallKind,
    apply_operator,
    build_system,
    compute_residual,
    divergence,
    subtract_gradient,
)
from .pcg import SolveConfig, SolveReport, pcg_solve
from .scenes import Sphere, Star, band_target_levels, tank_scene

__all__ = [
    "AdaptiveGrid", "CellIndex", "TileCoord", "TileKind", "build_grid", "coarse_neighbor",
    "leaf_cells", "TransferConfig", "build_hierarchy", "coarsen_coeffs", "BoundaryPolicy",
    "CellCoeffs", "CellKind", "PoissonSystem", "WallKind", "apply_operator", "build_system",
    "compute_residual", "divergence", "subtract_gradient", "SolveConfig", "SolveReport",
    "pcg_solve", "Sphere", "Star", "band_target_levels", "tank_scene",
]
