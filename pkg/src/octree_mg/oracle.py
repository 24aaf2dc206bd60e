"""Brute-force reference: dense assembly, dense Galerkin products, flux audits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .hierarchy import coarsen_coeffs, lattice_layout
from .operator import (
    FACE_TJUNCTION,
    CellKind,
    PoissonSystem,
    reconstruct_ghost,
)

DENSE_CAP = 20000


@dataclass
class DenseSystem:
    """Explicit matrix of a system restricted to its active leaf cells.

    ``index[row]`` is the flat-layout index of the cell behind ``row``.
    """

    n: int
    matrix: np.ndarray
    index: np.ndarray
    pure_neumann: bool = False

    def row_of(self) -> dict[int, int]:
        return {int(c): r for r, c in enumerate(self.index)}

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        a = self.matrix
        scale = max(np.abs(a).max(), 1e-300)
        return bool(np.abs(a - a.T).max() <= rtol * scale)


def assemble_dense(system: PoissonSystem, cap: int = DENSE_CAP) -> DenseSystem:
    """Column ``j`` is the operator applied to the unit vector of active cell ``j``."""
    index = np.flatnonzero(system.active_leaf)
    n = len(index)
    if n > cap:
        raise ValueError(f"{n} active cells exceed the dense cap {cap}")
    a = np.zeros((n, n))
    e = np.zeros(system.n)
    for j, cj in enumerate(index):
        e[cj] = 1.0
        a[:, j] = system.apply(e)[index]
        e[cj] = 0.0
    return DenseSystem(n, a, index, system.pure_neumann)


def dense_solve(ds: DenseSystem, b: np.ndarray) -> np.ndarray:
    """Direct solve; pure-Neumann systems get the zero-mean solution."""
    b = np.asarray(b, np.float64)
    if ds.pure_neumann:
        b = b - b.mean()
        one = np.ones((ds.n, 1)) / np.sqrt(ds.n)
        x = scipy.linalg.solve(ds.matrix + one @ one.T, b, assume_a="sym")
        return x - x.mean()
    return scipy.linalg.solve(ds.matrix, b)


def prolongation(shape, active: np.ndarray) -> np.ndarray:
    """Constant prolongation from the ``shape // 2`` lattice to active fine cells."""
    shape = tuple(shape)
    _, children, _ = lattice_layout(shape)
    n = int(np.prod(shape))
    m = len(children)
    p = np.zeros((n, m))
    for parent, kids in enumerate(children):
        for k in kids:
            if active[k]:
                p[k, parent] = 1.0
    return p


def galerkin_triple(a: np.ndarray, active: np.ndarray, shape, alpha: float = 2.0) -> np.ndarray:
    """``(1/alpha) P^T A P`` with ``A`` given on every fine lattice cell.

    Rows and columns of inactive cells are ignored.
    """
    p = prolongation(shape, np.asarray(active, bool))
    return p.T @ a @ p / alpha


def lattice_matrix(c: np.ndarray, cm: np.ndarray, nbr: np.ndarray) -> np.ndarray:
    """Dense 7-point matrix from diagonal and negative-face records.

    Couplings are kept only between cells with non-zero diagonal.
    """
    n = len(c)
    a = np.diag(np.asarray(c, np.float64))
    act = c != 0
    for ax in range(3):
        for i in range(n):
            j = nbr[2 * ax, i]
            if j >= 0 and act[i] and act[j]:
                a[i, j] = a[j, i] = cm[ax, i]
    return a


def random_patch(n: int, rng: np.random.Generator, p_fluid: float = 0.7):
    """Random cut-cell patch of ``n**3`` cells with mixed kinds and walls.

    Returns ``(c, cm, nbr, active)`` for the fine lattice with ``h = 1/n``.
    """
    shape = (n, n, n)
    nbr, _, _ = lattice_layout(shape)
    size = n**3
    kinds = rng.choice([CellKind.FLUID, CellKind.DIRICHLET, CellKind.NEUMANN], size=size,
                       p=[p_fluid, (1 - p_fluid) / 2, (1 - p_fluid) / 2])
    h = 1.0 / n
    c = np.zeros(size)
    cm = np.zeros((3, size))
    for d in range(6):
        ax = d // 2
        area = rng.uniform(0.05, 1.0, size) * h * h
        for i in range(size):
            j = nbr[d, i]
            if j >= 0:
                if d % 2 == 1:
                    continue  # each interior face once, from its + cell
                kj = kinds[j]
            else:
                kj = rng.choice([CellKind.DIRICHLET, CellKind.NEUMANN])
            ki = kinds[i]
            open_ = ki != CellKind.NEUMANN and kj != CellKind.NEUMANN
            open_ &= ki == CellKind.FLUID or kj == CellKind.FLUID
            coef = -area[i] / h if open_ else 0.0
            c[i] -= coef
            if j >= 0:
                c[j] -= coef
                cm[ax, i] = coef
    c[kinds != CellKind.FLUID] = 0.0
    return c, cm, nbr, c != 0


def random_patch_check(n: int, rng: np.random.Generator) -> float:
    """Relative difference between matrix-free coarsening and the dense product."""
    c, cm, nbr, active = random_patch(n, rng, p_fluid=rng.uniform(0.3, 1.0))
    _, children, cnbr = lattice_layout((n, n, n))
    ch, cmh = coarsen_coeffs(c, cm, nbr, children, nbr_coarse=cnbr)
    dense = galerkin_triple(lattice_matrix(c, cm, nbr), active, (n, n, n))
    mf = lattice_matrix(ch, cmh, cnbr)
    scale = np.abs(dense).max()
    if scale == 0.0:
        return float(np.abs(mf).max())
    return float(np.abs(mf - dense).max() / scale)


@dataclass
class FluxRecord:
    """One refinement-boundary face group: a coarse leaf and the fine cells behind it."""

    coarse: int
    direction: int
    fine_flux: float
    coarse_flux: float

    @property
    def mismatch(self) -> float:
        return self.fine_flux + self.coarse_flux

    @property
    def scale(self) -> float:
        return max(abs(self.fine_flux), abs(self.coarse_flux))


def flux_audit(system: PoissonSystem, values: np.ndarray) -> list[FluxRecord]:
    """Fine and coarse fluxes through every refinement-boundary face group.

    Fluxes are outward from each side, ``coef * (p_self - p_other)``, with the
    ghost value on the fine side and the Inner parent (mean of its children)
    standing in for the fine cells on the coarse side.  Conservation means
    they cancel.  Requires a system built with ``keep_faces=True``.
    """
    faces, coef = system.faces, system.face_coef
    if faces is None:
        raise ValueError("system was built without its face list")
    lay = system.layout
    x = np.multiply(values, system.active_leaf).astype(np.float64)
    system.fill_inner(x)
    tj = np.flatnonzero(faces.type == FACE_TJUNCTION)
    groups: dict[tuple[int, int, int], list[int]] = {}
    for f in tj:
        cell = int(faces.cell[f])
        groups.setdefault((int(faces.other[f]), int(faces.dir[f]), int(lay.parent[cell])),
                          []).append(f)
    out = []
    for (coarse, d, par), fs in sorted(groups.items()):
        fine_flux = 0.0
        coarse_coef = 0.0
        for f in fs:
            cell = int(faces.cell[f])
            if system.kinds[cell] != CellKind.FLUID:
                continue
            g = reconstruct_ghost(x[cell], x[coarse], x[par])
            fine_flux += coef[f] * (x[cell] - g)
            coarse_coef += 0.5 * coef[f]
        coarse_flux = coarse_coef * (x[coarse] - x[par])
        out.append(FluxRecord(coarse, d ^ 1, fine_flux, coarse_flux))
    return out


def conservation_defect(system: PoissonSystem, values: np.ndarray) -> float:
    """``|sum_i (A x)_i| / sum_i |(A x)_i|`` over active leaf cells.

    Every interior face flux cancels between its two sides, so on a closed
    (all-Neumann) domain the sum vanishes for any ``x``.
    """
    y = system.apply(np.multiply(values, system.active_leaf))[system.active_leaf]
    scale = np.sum(np.abs(y))
    return float(abs(np.sum(y)) / scale) if scale > 0 else 0.0
