"""Red-black Gauss-Seidel and the FAS-style mu-cycle on the composite hierarchy.

Leaf entries of ``u`` are composite unknowns at every level; Inner entries
are coarse-grid variables.  Going down, an Inner cell starts from the mean of
its children ``u*`` and receives ``b = beta * R r + A u*``; coming back up,
its children gain ``u - u*``.  Coarse Leaf cells keep their own right-hand
side and are relaxed in place, so refinement-boundary fluxes are counted once.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import kernels as K
from .hierarchy import Hierarchy, LevelState


class SweepOrder(Enum):
    RED_THEN_BLACK = (0, 1)
    BLACK_THEN_RED = (1, 0)

    @property
    def reverse(self) -> SweepOrder:
        if self is SweepOrder.RED_THEN_BLACK:
            return SweepOrder.BLACK_THEN_RED
        return SweepOrder.RED_THEN_BLACK


class CycleScratch:
    """Work arrays shared by all levels (each level owns a disjoint slice)."""

    def __init__(self, n: int, n_ghost: int, dtype):
        self.u = np.zeros(n, dtype)
        self.b = np.zeros(n, dtype)
        self.r = np.zeros(n, dtype)
        self.ustar = np.zeros(n, dtype)
        self.gacc = np.zeros(max(n_ghost, 1), dtype)


def rbgs_sweep(hier: Hierarchy, st: LevelState, color: int, u: np.ndarray, b: np.ndarray,
               gacc: np.ndarray | None = None) -> None:
    """Update the active cells of one colour (parity of i+j+k) in place."""
    sys_ = hier.system
    lay, cf = sys_.layout, sys_.coeffs
    if gacc is None:
        gacc = np.zeros(max(len(lay.ghost_cell), 1), u.dtype)
    K.rbgs_phase(st.lo, st.hi, st.glo, st.ghi, color, u, b, cf.c, cf.cm, lay.nbr,
                 lay.ghost_cell, lay.ghost_src, lay.ghost_parent, cf.ghost_coef,
                 lay.children, lay.color, gacc)


def smooth(hier: Hierarchy, st: LevelState, count: int, order: SweepOrder, u, b,
           gacc=None) -> None:
    """``count`` colour pairs in the given order."""
    for _ in range(count):
        for color in order.value:
            rbgs_sweep(hier, st, color, u, b, gacc)


def level_residual(hier: Hierarchy, st: LevelState, u, b, r) -> None:
    sys_ = hier.system
    lay, cf = sys_.layout, sys_.coeffs
    K.residual_rows(st.lo, st.hi, st.glo, st.ghi, u, b, r, cf.c, cf.cm, lay.nbr,
                    lay.ghost_cell, lay.ghost_src, lay.ghost_parent, cf.ghost_coef,
                    lay.children, lay.is_leaf)


def fas_mu_cycle(hier: Hierarchy, k: int, s: CycleScratch) -> None:
    """One mu-cycle starting at hierarchy index ``k`` (0 = finest), in place on ``s.u``.

    ``s.b`` must hold the right-hand side on the Leaf rows of every level.
    """
    if not 0 <= k < len(hier.levels):
        raise IndexError(f"level index {k} outside the hierarchy")
    cfg = hier.config
    st = hier.levels[k]
    if k == len(hier.levels) - 1:
        half = cfg.nu_base // 2
        smooth(hier, st, half, SweepOrder.RED_THEN_BLACK, s.u, s.b, s.gacc)
        smooth(hier, st, cfg.nu_base - half, SweepOrder.BLACK_THEN_RED, s.u, s.b, s.gacc)
        return
    sys_ = hier.system
    lay, cf = sys_.layout, sys_.coeffs
    smooth(hier, st, cfg.nu_level, SweepOrder.RED_THEN_BLACK, s.u, s.b, s.gacc)
    level_residual(hier, st, s.u, s.b, s.r)
    co = hier.levels[k + 1]
    K.restrict_level(co.lo, co.hi, s.u, s.r, s.b, s.ustar, cf.c, lay.children, lay.is_leaf,
                     cfg.beta / cfg.alpha)
    K.add_inner_apply(co.lo, co.hi, s.u, s.b, cf.c, cf.cm, lay.nbr, lay.is_leaf)
    for _ in range(cfg.mu):
        fas_mu_cycle(hier, k + 1, s)
    K.prolongate_level(co.lo, co.hi, s.u, s.ustar, cf.c, lay.children, lay.is_leaf)
    smooth(hier, st, cfg.nu_level, SweepOrder.BLACK_THEN_RED, s.u, s.b, s.gacc)


class MuCyclePreconditioner:
    """``z = M r``: one mu-cycle from a zero initial guess.

    ``r`` and ``z`` are full-layout vectors whose Inner entries are zero.
    """

    def __init__(self, hier: Hierarchy):
        self.hier = hier
        sys_ = hier.system
        self.scratch = CycleScratch(sys_.n, len(sys_.layout.ghost_cell), sys_.dtype)
        self.leaf_mask = sys_.active_leaf

    def __call__(self, r: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        s = self.scratch
        s.u[:] = 0
        s.b[:] = 0
        np.copyto(s.b, r, where=self.leaf_mask)
        fas_mu_cycle(self.hier, 0, s)
        z = np.zeros_like(r) if out is None else out
        z[:] = 0
        np.copyto(z, s.u, where=self.leaf_mask)
        return z

    def cycle(self, u: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Standalone cycle improving ``u`` for right-hand side ``b``."""
        s = self.scratch
        s.u[:] = 0
        np.copyto(s.u, u, where=self.leaf_mask)
        s.b[:] = 0
        np.copyto(s.b, b, where=self.leaf_mask)
        fas_mu_cycle(self.hier, 0, s)
        out = np.zeros_like(u)
        np.copyto(out, s.u, where=self.leaf_mask)
        return out
