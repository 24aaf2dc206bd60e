"""Cut-cell Poisson operator on the adaptive grid.

Each cell stores one diagonal and three negative-face coefficients (the
matrix-free record).  For an all-fluid cell of size ``h`` the record is
``(6h, -h, -h, -h)``; applied to a field it returns the sum of face fluxes,
i.e. approximately ``-V * laplacian``.

Across a refinement boundary the fine cell sees a ghost value
``g = p_f + (p_c - mean(children of parent)) / 2`` and the coarse cell sees one
aggregated face with coefficient ``-sum(S_f) / (2 h_f)``, so the flux leaving
the coarse cell equals the sum of the fluxes entering the fine cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import kernels as K
from .grid import DIRS, TILE, AdaptiveGrid, CellLayout
from .scenes import SceneSdf


class CellKind(IntEnum):
    FLUID = 0
    DIRICHLET = 1
    NEUMANN = 2


class WallKind(IntEnum):
    """Condition applied on faces that lie on the domain boundary."""

    NEUMANN = 0
    # p = 0 one cell beyond the wall (an implied Dirichlet cell)
    DIRICHLET = 1
    # p = 0 on the wall face itself (ghost value mirrored, half-cell distance)
    DIRICHLET_WALL = 2


@dataclass(frozen=True)
class BoundaryPolicy:
    """Per domain face (-x, +x, -y, +y, -z, +z) boundary treatment.

    Attributes
    ----------
    walls : tuple of WallKind
        Condition for faces that leave the domain.
    layers : tuple of CellKind or None
        Kind forced onto the outermost leaf-cell layer at each domain face.
        Where layers overlap, Neumann takes precedence over Dirichlet.
    """

    walls: tuple = (WallKind.NEUMANN,) * 6
    layers: tuple = (None,) * 6

    @classmethod
    def closed(cls) -> BoundaryPolicy:
        return cls()

    @classmethod
    def neumann_layer(cls) -> BoundaryPolicy:
        return cls(layers=(CellKind.NEUMANN,) * 6)

    @classmethod
    def dirichlet_walls(cls) -> BoundaryPolicy:
        return cls(walls=(WallKind.DIRICHLET_WALL,) * 6)

    @classmethod
    def tank(cls, air_layer: bool = True) -> BoundaryPolicy:
        top = CellKind.DIRICHLET if air_layer else None
        n = CellKind.NEUMANN
        return cls(layers=(n, n, n, top, n, n))

    @property
    def pure_neumann(self) -> bool:
        return all(w == WallKind.NEUMANN for w in self.walls) and all(
            k != CellKind.DIRICHLET for k in self.layers
        )


def classify_cells(
    grid: AdaptiveGrid, scene: SceneSdf | None, policy: BoundaryPolicy
) -> np.ndarray:
    """Kind of every leaf cell from the centre sample (-1 for Inner cells).

    ``solid_phi < 0`` gives Neumann, otherwise ``air_phi < 0`` gives
    Dirichlet, otherwise Fluid.  Boundary layers from ``policy`` override the
    scene.
    """
    lay = grid.layout
    kinds = np.full(lay.n, -1, np.int8)
    leaf = lay.leaf_index()
    kinds[leaf] = CellKind.FLUID
    if scene is not None and (scene.solid_phi is not None or scene.air_phi is not None):
        x = (lay.coords[leaf] + 0.5) * lay.h()[leaf, None]
        if scene.air_phi is not None:
            kinds[leaf[scene.air_phi(x) < 0]] = CellKind.DIRICHLET
        if scene.solid_phi is not None:
            kinds[leaf[scene.solid_phi(x) < 0]] = CellKind.NEUMANN
    on_face = lay.boundary[:, leaf]
    for want in (CellKind.DIRICHLET, CellKind.NEUMANN):
        for d in range(6):
            if policy.layers[d] == want:
                kinds[leaf[on_face[d]]] = want
    return kinds


def face_fluid_area(corners, h: float, center: float = 0.0) -> float:
    """Fluid area of a square face of edge ``h`` from its corner samples.

    ``corners`` are the solid level-set values counter-clockwise around the
    face; fluid is ``phi >= 0``.  ``center`` resolves the saddle case.
    """
    v = [float(c) for c in corners]
    return h * h * K.ms_fraction(v[0], v[1], v[2], v[3], float(center))


def face_corner_offsets(d: int) -> np.ndarray:
    """Cell-corner offsets of the face in direction ``d``, counter-clockwise."""
    ax = d // 2
    u, v = [a for a in range(3) if a != ax]
    out = np.zeros((4, 3), np.int64)
    out[:, ax] = d % 2
    for k, (a, b) in enumerate(((0, 0), (1, 0), (1, 1), (0, 1))):
        out[k, u] = a
        out[k, v] = b
    return out


def face_areas(lay: CellLayout, cells: np.ndarray, d: int, solid_phi) -> np.ndarray:
    """Fluid area of face ``d`` of each cell (all leaf cells at their own size)."""
    h = lay.h()[cells]
    full = h * h
    if solid_phi is None or len(cells) == 0:
        return full
    g = lay.coords[cells].astype(np.float64)
    offs = face_corner_offsets(d)
    pts = (g[:, None, :] + offs[None, :, :]) * h[:, None, None]
    vals = solid_phi(pts)
    frac = np.ones(len(cells))
    frac[np.all(vals < 0, axis=1)] = 0.0
    mixed = np.any(vals < 0, axis=1) & np.any(vals >= 0, axis=1)
    if np.any(mixed):
        ctr = g[mixed] + 0.5
        ax = d // 2
        ctr[:, ax] = g[mixed, ax] + d % 2
        cval = solid_phi(ctr * h[mixed, None])
        frac[mixed] = K.ms_fractions(np.ascontiguousarray(vals[mixed]), cval)
    return full * frac


FACE_SAME, FACE_TJUNCTION, FACE_BOUNDARY = 0, 1, 2


@dataclass
class FaceSet:
    """Every leaf face once, seen from its fine (or, if equal, its +) side.

    ``other`` is the same-level leaf, the coarse leaf behind a ghost, or -1
    on the domain boundary.  ``ghost`` indexes the layout's ghost entries for
    refinement-boundary faces.
    """

    cell: np.ndarray
    dir: np.ndarray
    other: np.ndarray
    type: np.ndarray
    area: np.ndarray
    h: np.ndarray
    wall: np.ndarray
    ghost: np.ndarray

    def __len__(self):
        return len(self.cell)


def build_faces(lay: CellLayout, scene: SceneSdf | None, policy: BoundaryPolicy) -> FaceSet:
    leaf = lay.leaf_index()
    solid = scene.solid_phi if scene is not None else None
    hcell = lay.h()
    gpos = {}
    for e, (c, d) in enumerate(zip(lay.ghost_cell.tolist(), lay.ghost_dir.tolist())):
        gpos[(c, d)] = e
    parts = []
    for d in range(6):
        nb = lay.nbr[d, leaf]
        bnd = lay.boundary[d, leaf]
        same = nb >= 0
        same_leaf = np.zeros_like(same)
        same_leaf[same] = lay.is_leaf[nb[same]]
        ghost = ~same & ~bnd
        take = ghost | bnd | (same_leaf & (d % 2 == 0))
        cells = leaf[take]
        other = nb[take].astype(np.int64)
        typ = np.where(ghost[take], FACE_TJUNCTION, np.where(bnd[take], FACE_BOUNDARY, FACE_SAME))
        gidx = np.full(len(cells), -1, np.int64)
        tj = np.flatnonzero(typ == FACE_TJUNCTION)
        if len(tj):
            gidx[tj] = [gpos[(int(c), d)] for c in cells[tj]]
            other[tj] = lay.ghost_src[gidx[tj]]
        other[typ == FACE_BOUNDARY] = -1
        wall = np.where(typ == FACE_BOUNDARY, int(policy.walls[d]), -1)
        parts.append((cells, np.full(len(cells), d), other, typ,
                      face_areas(lay, cells, d, solid), hcell[cells], wall, gidx))
    cat = [np.concatenate([p[k] for p in parts]) for k in range(8)]
    order = np.lexsort((cat[1], cat[0]))
    cat = [a[order] for a in cat]
    return FaceSet(cat[0].astype(np.int64), cat[1].astype(np.int8), cat[2], cat[3].astype(np.int8),
                   cat[4], cat[5], cat[6].astype(np.int8), cat[7])


def face_coefficients(faces: FaceSet, kinds: np.ndarray) -> np.ndarray:
    """``-S/h`` where the face couples an unknown, else 0.

    Zero when either side is Neumann or neither side is Fluid.  Wall faces take
    the side beyond from the boundary policy; a Dirichlet wall on the face
    itself doubles the coefficient (half-cell distance to the prescribed value).
    """
    k_self = kinds[faces.cell]
    k_other = np.full(len(faces), CellKind.NEUMANN, np.int8)
    inside = faces.type != FACE_BOUNDARY
    k_other[inside] = kinds[faces.other[inside]]
    wall = faces.wall
    k_other[wall == WallKind.DIRICHLET] = CellKind.DIRICHLET
    k_other[wall == WallKind.DIRICHLET_WALL] = CellKind.DIRICHLET
    open_ = (k_self != CellKind.NEUMANN) & (k_other != CellKind.NEUMANN)
    open_ &= (k_self == CellKind.FLUID) | (k_other == CellKind.FLUID)
    coef = np.where(open_, -faces.area / faces.h, 0.0)
    coef[wall == WallKind.DIRICHLET_WALL] *= 2.0
    return coef


@dataclass
class CellCoeffs:
    """Matrix-free operator record over the flat layout.

    ``c`` is the diagonal and ``cm[a]`` the coefficient of the negative face
    along axis ``a``; positive faces are read from the neighbour's record.
    ``ghost_coef`` holds the fine-side coefficient of every refinement-boundary
    face.  Inner-cell entries are filled by Galerkin coarsening.
    """

    c: np.ndarray
    cm: np.ndarray
    ghost_coef: np.ndarray

    def astype(self, dtype) -> CellCoeffs:
        return CellCoeffs(self.c.astype(dtype), self.cm.astype(dtype),
                          self.ghost_coef.astype(dtype))


def coeffs_from_faces(lay: CellLayout, kinds: np.ndarray, faces: FaceSet,
                      coef: np.ndarray) -> CellCoeffs:
    n = lay.n
    c = np.zeros(n)
    cm = np.zeros((3, n))
    gcoef = np.zeros(len(lay.ghost_cell))
    ax = faces.dir // 2
    neg = faces.dir % 2 == 0
    # every face contributes to its owner's diagonal
    np.add.at(c, faces.cell, -coef)
    same = faces.type == FACE_SAME
    np.add.at(c, faces.other[same], -coef[same])
    store = neg & (faces.type != FACE_TJUNCTION)
    cm[ax[store], faces.cell[store]] = coef[store]
    tj = np.flatnonzero(faces.type == FACE_TJUNCTION)
    if len(tj):
        gcoef[faces.ghost[tj]] = coef[tj]
        tneg = tj[neg[tj]]
        cm[ax[tneg], faces.cell[tneg]] = coef[tneg]
        # coarse side: one aggregated face, half the fine coefficients of fluid cells
        fluid = tj[kinds[faces.cell[tj]] == CellKind.FLUID]
        half = 0.5 * coef[fluid]
        np.add.at(c, faces.other[fluid], -half)
        # coarse cell's negative face when the fine cells lie on its + side ...
        pos = fluid[~neg[fluid]]
        np.add.at(cm, (ax[pos], faces.other[pos]), 0.5 * coef[pos])
        # ... otherwise the face belongs to the Inner parent on the coarse + side
        nfl = fluid[neg[fluid]]
        par = lay.parent[faces.cell[nfl]]
        np.add.at(cm, (ax[nfl], par), 0.5 * coef[nfl])
    c[kinds != CellKind.FLUID] = 0.0
    return CellCoeffs(c, cm, gcoef)


def assemble_coeffs(grid: AdaptiveGrid, kinds: np.ndarray, scene: SceneSdf | None,
                    policy: BoundaryPolicy) -> tuple[CellCoeffs, FaceSet, np.ndarray]:
    """Leaf coefficients of the cut-cell operator.

    Returns
    -------
    coeffs : CellCoeffs
        Leaf rows plus the aggregated coarse-side refinement faces.
    faces : FaceSet
        Face list used for the assembly.
    coef : ndarray
        Coefficient of each face in ``faces``.
    """
    lay = grid.layout
    faces = build_faces(lay, scene, policy)
    coef = face_coefficients(faces, kinds)
    return coeffs_from_faces(lay, kinds, faces, coef), faces, coef


def reconstruct_ghost(p_f, p_c, child_avg):
    """Ghost value ``g`` with ``(g - p_f) / h = (p_c - child_avg) / (2h)``."""
    return p_f + 0.5 * (p_c - child_avg)


# ---------------------------------------------------------------------------
# the assembled system


@dataclass
class PoissonSystem:
    """Grid, cell kinds and operator coefficients of one Poisson problem.

    Fields live on the flat layout; Leaf entries are unknowns of the composite
    system and Inner entries are only used as multigrid variables.
    """

    grid: AdaptiveGrid
    kinds: np.ndarray
    coeffs: CellCoeffs
    policy: BoundaryPolicy
    faces: FaceSet | None = None
    face_coef: np.ndarray | None = None
    dtype: type = np.float64
    _scratch: dict = field(default_factory=dict, repr=False)

    @property
    def layout(self) -> CellLayout:
        return self.grid.layout

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def active_leaf(self) -> np.ndarray:
        lay = self.layout
        return lay.is_leaf & (self.coeffs.c != 0)

    @property
    def pure_neumann(self) -> bool:
        if not self.policy.pure_neumann:
            return False
        return not np.any(self.kinds == CellKind.DIRICHLET)

    def volumes(self) -> np.ndarray:
        return self.layout.h() ** 3

    def zeros(self) -> np.ndarray:
        return np.zeros(self.n, dtype=self.dtype)

    def leaf_levels(self) -> range:
        lmin, lmax = self.grid.level_range
        return range(lmin, lmax + 1)

    def _args(self):
        lay, cf = self.layout, self.coeffs
        return (cf.c, cf.cm, lay.nbr, lay.ghost_cell, lay.ghost_src, lay.ghost_parent,
                cf.ghost_coef, lay.children)

    def apply_level(self, level: int, x: np.ndarray, y: np.ndarray, leaf_only=False):
        lay = self.layout
        lo, hi = lay.cell_range(level)
        glo, ghi = lay.ghost_range(level)
        c, cm, nbr, gc, gs, gp, gcoef, ch = self._args()
        K.apply_rows(lo, hi, glo, ghi, x, y, c, cm, nbr, gc, gs, gp, gcoef, ch,
                     leaf_only, lay.is_leaf)

    def fill_inner(self, x: np.ndarray) -> None:
        """Inner entries at leaf levels take the mean of their active children."""
        lay = self.layout
        lmin, lmax = self.grid.level_range
        active = self.coeffs.c != 0
        active = active | ~lay.is_leaf
        for lvl in range(lmax - 1, lmin - 1, -1):
            lo, hi = lay.cell_range(lvl)
            K.fill_inner_mean(lo, hi, x, active, lay.children, lay.is_leaf)

    def apply(self, x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Composite operator on the leaf unknowns (Inner entries of ``x`` ignored)."""
        xf = self._scratch.get("apply")
        if xf is None or xf.dtype != x.dtype:
            xf = self._scratch["apply"] = np.empty(self.n, dtype=x.dtype)
        np.multiply(x, self.active_leaf, out=xf)
        self.fill_inner(xf)
        y = np.zeros(self.n, dtype=x.dtype) if out is None else out
        y[:] = 0
        for lvl in self.leaf_levels():
            self.apply_level(lvl, xf, y, leaf_only=True)
        return y

    def residual(self, x: np.ndarray, b: np.ndarray) -> np.ndarray:
        r = b - self.apply(x)
        r[~self.active_leaf] = 0
        return r

    def astype(self, dtype) -> PoissonSystem:
        return PoissonSystem(self.grid, self.kinds, self.coeffs.astype(dtype), self.policy,
                             self.faces, self.face_coef, dtype)


def build_system(grid: AdaptiveGrid, scene: SceneSdf | None, policy: BoundaryPolicy,
                 dtype=np.float64, keep_faces: bool = False) -> PoissonSystem:
    kinds = classify_cells(grid, scene, policy)
    coeffs, faces, coef = assemble_coeffs(grid, kinds, scene, policy)
    sys_ = PoissonSystem(grid, kinds, coeffs, policy,
                         faces if keep_faces else None, coef if keep_faces else None)
    return sys_.astype(dtype) if dtype != np.float64 else sys_


def apply_operator(system: PoissonSystem, x: np.ndarray) -> np.ndarray:
    return system.apply(x)


def compute_residual(system: PoissonSystem, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    return system.residual(x, b)


# ---------------------------------------------------------------------------
# face velocities


def face_gradient(system: PoissonSystem, p: np.ndarray) -> np.ndarray:
    """Outward normal pressure difference times the face coefficient.

    For face ``f`` owned by cell ``i`` this is ``coef_f * (p_other - p_i)``
    with ghost reconstruction on refinement faces, i.e. the change in the
    owner's outward flux when the gradient of ``p`` is subtracted.
    """
    faces, coef = system.faces, system.face_coef
    lay = system.layout
    xf = np.multiply(p, system.active_leaf).astype(np.float64)
    system.fill_inner(xf)
    other_val = np.zeros(len(faces))
    same = faces.type == FACE_SAME
    other_val[same] = xf[faces.other[same]]
    tj = faces.type == FACE_TJUNCTION
    own = xf[faces.cell]
    if np.any(tj):
        par = lay.parent[faces.cell[tj]]
        other_val[tj] = reconstruct_ghost(own[tj], xf[faces.other[tj]], xf[par])
    return coef * (other_val - own)


def outward_normal_sign(faces: FaceSet) -> np.ndarray:
    return np.where(faces.dir % 2 == 1, 1.0, -1.0)


def divergence(system: PoissonSystem, face_velocity: np.ndarray) -> np.ndarray:
    """Cell divergence ``sum(u . n S) / V`` over Fluid leaf cells.

    ``face_velocity`` is the normal velocity component (along +axis) on each
    face of ``system.faces``; closed faces (zero coefficient) carry no flux.
    """
    faces, coef = system.faces, system.face_coef
    h = faces.h
    open_area = -coef * h
    open_area[faces.wall == WallKind.DIRICHLET_WALL] *= 0.5
    flux = outward_normal_sign(faces) * face_velocity * open_area
    div = np.zeros(system.n)
    np.add.at(div, faces.cell, flux)
    same = faces.type == FACE_SAME
    np.add.at(div, faces.other[same], -flux[same])
    tj = np.flatnonzero(faces.type == FACE_TJUNCTION)
    fluid = tj[system.kinds[faces.cell[tj]] == CellKind.FLUID]
    np.add.at(div, faces.other[fluid], -flux[fluid])
    div[~system.active_leaf] = 0
    return div / system.volumes()


def subtract_gradient(system: PoissonSystem, face_velocity: np.ndarray,
                      p: np.ndarray) -> np.ndarray:
    """``u <- u - dp/dn`` on every open face (same ghost convention as the operator)."""
    faces = system.faces
    h = faces.h
    open_area = -system.face_coef * h
    open_area[faces.wall == WallKind.DIRICHLET_WALL] *= 0.5
    dflux = face_gradient(system, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        du = np.where(open_area > 0, dflux / open_area, 0.0)
    return face_velocity + outward_normal_sign(faces) * du


def uniform_face_velocity(system: PoissonSystem, velocity) -> np.ndarray:
    faces = system.faces
    return np.asarray(velocity, dtype=np.float64)[faces.dir // 2]


def cell_centers(system: PoissonSystem) -> np.ndarray:
    return system.layout.centers()


__all__ = [
    "CellKind", "WallKind", "BoundaryPolicy", "CellCoeffs", "FaceSet", "PoissonSystem",
    "classify_cells", "face_fluid_area", "face_areas", "build_faces", "face_coefficients",
    "coeffs_from_faces", "assemble_coeffs", "reconstruct_ghost", "build_system",
    "apply_operator", "compute_residual", "divergence", "subtract_gradient",
    "uniform_face_velocity", "DIRS", "TILE",
]
