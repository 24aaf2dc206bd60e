"""Multigrid level stack built by Galerkin coarsening of the cell records.

Level ``l`` of the hierarchy holds the Leaf cells of level ``l`` (coefficients
from the discretisation) and the Inner cells of level ``l`` (coefficients
coarsened from their children with ``alpha = 2``).  With constant
prolongation ``P`` and restriction ``R = P^T / alpha`` the coarsened record is
exactly ``R A P`` on any uniform block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .grid import OCTANTS
from .operator import CellCoeffs, PoissonSystem


@dataclass
class TransferConfig:
    """Cycle and transfer parameters.

    Attributes
    ----------
    alpha : float
        Restriction scaling; only 2 keeps leaf and inner records consistent.
    beta : float
        Extra factor on the restricted residual (2 as a preconditioner).
    mu : int
        Coarse visits per level (1: V-cycle, 2: W-cycle).
    nu_level, nu_base : int
        Smoothing sweeps per level and on the coarsest level.
    coarsest_threshold : int
        Stop coarsening below the coarsest leaf level once a level has at
        most this many cells.
    gated : bool
        Drop off-diagonal contributions whose far cell is inactive.
    geometric : bool
        Replace coarsened Inner records by full-fluid geometric ones.
    """

    alpha: float = 2.0
    beta: float = 2.0
    mu: int = 1
    nu_level: int = 2
    nu_base: int = 10
    coarsest_threshold: int = 512
    gated: bool = True
    geometric: bool = False

    def __post_init__(self):
        if self.alpha != 2.0:
            raise ValueError("alpha = 2 is required for consistent leaf/inner records")
        if self.mu < 1 or self.nu_level < 0 or self.nu_base < 0:
            raise ValueError("invalid cycle counts")


@dataclass
class LevelState:
    """View of one hierarchy level on the flat layout."""

    level: int
    lo: int
    hi: int
    glo: int
    ghi: int
    h: float

    @property
    def size(self) -> int:
        return self.hi - self.lo

    @property
    def has_ghosts(self) -> bool:
        return self.ghi > self.glo


@dataclass
class Hierarchy:
    system: PoissonSystem
    config: TransferConfig
    levels: list[LevelState]
    active_counts: list[int] = field(default_factory=list)

    @property
    def finest(self) -> LevelState:
        return self.levels[0]

    @property
    def coarsest(self) -> LevelState:
        return self.levels[-1]


def coarsen_coeffs(c_fine, cm_fine, nbr_fine, children, nbr_coarse=None,
                   coarse_active=None, gated: bool = True, alpha: float = 2.0):
    """Galerkin records of parent cells from their 2x2x2 child blocks.

    Parameters
    ----------
    c_fine, cm_fine : ndarray
        Child diagonal ``(n,)`` and negative-face coefficients ``(3, n)``.
    nbr_fine : (6, n) int
        Same-level child neighbours (-1 outside the fine set).
    children : (m, 8) int
        Child indices per parent, octant ``(di << 2) | (dj << 1) | dk``.
    nbr_coarse : (6, m) int, optional
        Parent neighbours; a child face whose fine neighbour is missing couples
        to this parent-level cell.
    coarse_active : (m,) bool, optional
        Activity of the parent-level neighbours referenced by ``nbr_coarse``.
    gated : bool
        If False, every child face on a parent face is summed (no activity
        test on the cells beyond).

    Returns
    -------
    c, cm : ndarray
        Parent diagonal ``(m,)`` and negative-face coefficients ``(3, m)``.
    """
    if alpha != 2.0:
        raise ValueError("alpha must be 2")
    n = len(c_fine)
    m = len(children)
    c = np.concatenate([np.asarray(c_fine, np.float64), np.zeros(m)])
    cm = np.concatenate([np.asarray(cm_fine, np.float64), np.zeros((3, m))], axis=1)
    nbr = np.full((6, n + m), -1, np.int64)
    nbr[:, :n] = nbr_fine
    if nbr_coarse is not None:
        nc = np.asarray(nbr_coarse, np.int64)
        nbr[:, n:] = np.where(nc >= 0, nc + n, -1)
        if coarse_active is not None:
            # parent-level neighbours are only inspected for activity
            c[n:] = np.where(coarse_active, 1.0, 0.0)
    ch = np.full((n + m, 8), -1, np.int64)
    ch[n:] = children
    K.coarsen_rows(n, n + m, c, cm, nbr, ch, gated)
    return c[n:], cm[:, n:]


def _geometric_rows(system: PoissonSystem, lvl: int, h: float):
    """Full-fluid 7-point records for the Inner cells of a level (GMG mode)."""
    lay = system.layout
    cf = system.coeffs
    lo, hi = lay.cell_range(lvl)
    idx = np.arange(lo, hi)
    inner = idx[~lay.is_leaf[lo:hi] & (cf.c[lo:hi] != 0)]
    if len(inner) == 0:
        return
    cf.c[inner] = 6.0 * h
    for ax in range(3):
        cf.cm[ax, inner] = -h


def build_hierarchy(system: PoissonSystem, config: TransferConfig | None = None) -> Hierarchy:
    """Coarsen Inner records level by level and choose the level stack.

    Levels run from the finest leaf level down to the coarsest leaf level,
    then further while the level holds more than ``coarsest_threshold`` cells.
    """
    config = config or TransferConfig()
    lay = system.layout
    cf = system.coeffs
    lmin, lmax = system.grid.level_range
    if not np.any(system.active_leaf):
        raise ValueError("no active cells on the finest level")
    c64 = cf.c.astype(np.float64)
    cm64 = cf.cm.astype(np.float64)
    levels = []
    counts = []
    for lvl in range(lmax, -1, -1):
        lo, hi = lay.cell_range(lvl)
        if lvl < lmax:
            K.coarsen_rows(lo, hi, c64, cm64, lay.nbr, lay.children, config.gated)
        glo, ghi = lay.ghost_range(lvl)
        h = 2.0**-lvl / 8
        levels.append(LevelState(lvl, lo, hi, glo, ghi, h))
        counts.append(int(np.count_nonzero(c64[lo:hi])))
        if lvl <= lmin and (hi - lo <= config.coarsest_threshold or lvl == 0):
            break
    if levels[-1].has_ghosts:
        raise RuntimeError("coarsest level must not reference coarser leaves")
    cf.c[:] = c64.astype(cf.c.dtype)
    cf.cm[:] = cm64.astype(cf.cm.dtype)
    if config.geometric:
        for st in levels[1:]:
            _geometric_rows(system, st.level, st.h)
    return Hierarchy(system, config, levels, counts)


def restrict_residual(children_r: np.ndarray, active: np.ndarray | None = None,
                      alpha: float = 2.0) -> np.ndarray:
    """``(1/alpha) * sum`` of the active children's residuals, per parent."""
    r = np.asarray(children_r, np.float64)
    if active is not None:
        r = np.where(active, r, 0.0)
    return r.sum(axis=-1) / alpha


def average_down(children_u: np.ndarray, active: np.ndarray | None = None) -> np.ndarray:
    """Mean over active children (0 for a parent without active children)."""
    u = np.asarray(children_u, np.float64)
    if active is None:
        active = np.ones(u.shape, bool)
    n = active.sum(axis=-1)
    s = np.where(active, u, 0.0).sum(axis=-1)
    return np.divide(s, n, out=np.zeros_like(s), where=n > 0)


def prolongate_update(children_u: np.ndarray, coarse_u, coarse_u_star,
                      active: np.ndarray | None = None) -> np.ndarray:
    """Children gain ``u - u*`` of their parent (constant prolongation)."""
    u = np.array(children_u, np.float64)
    d = np.asarray(coarse_u, np.float64) - np.asarray(coarse_u_star, np.float64)
    upd = np.broadcast_to(np.expand_dims(d, -1), u.shape)
    if active is not None:
        upd = np.where(active, upd, 0.0)
    return u + upd


def lattice_layout(shape):
    """Neighbour and child tables of a box of cells (for patch-level checks).

    Returns fine neighbours ``(6, n)``, parent-lattice children ``(m, 8)`` and
    parent neighbours ``(6, m)`` with C-ordered indexing.
    """
    shape = tuple(int(s) for s in shape)
    idx = np.arange(np.prod(shape)).reshape(shape)
    nbr = np.full((6,) + shape, -1, np.int64)
    for ax in range(3):
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[ax] = slice(1, None)
        sl_hi[ax] = slice(None, -1)
        nbr[2 * ax][tuple(sl_lo)] = idx[tuple(sl_hi)]
        nbr[2 * ax + 1][tuple(sl_hi)] = idx[tuple(sl_lo)]
    cshape = tuple(s // 2 for s in shape)
    g = np.indices(cshape).reshape(3, -1).T
    kids = 2 * g[:, None, :] + OCTANTS[None]
    children = idx[kids[..., 0], kids[..., 1], kids[..., 2]]
    cidx = np.arange(np.prod(cshape)).reshape(cshape)
    cn = np.full((6,) + cshape, -1, np.int64)
    for ax in range(3):
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[ax] = slice(1, None)
        sl_hi[ax] = slice(None, -1)
        cn[2 * ax][tuple(sl_lo)] = cidx[tuple(sl_hi)]
        cn[2 * ax + 1][tuple(sl_hi)] = cidx[tuple(sl_lo)]
    return nbr.reshape(6, -1), children, cn.reshape(6, -1)


__all__ = [
    "TransferConfig", "LevelState", "Hierarchy", "CellCoeffs", "coarsen_coeffs",
    "build_hierarchy", "restrict_residual", "average_down", "prolongate_update",
    "lattice_layout",
]
