"""Graded tile octree and its flattened cell layout.

The domain is covered by cubic tiles of ``TILE**3`` cells.  Level ``l`` has
``extent * 2**l`` tiles per axis, so the cell size at level ``l`` is
``2**-l / TILE``.  Leaf tiles partition the domain, Inner tiles sit above
them, and Ghost tiles mark the fine side of every coarse/fine leaf face.

After construction the grid is flattened into a single index space covering
the Leaf and Inner cells of every level.  All numerical kernels work on that
flat layout (see :class:`CellLayout`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterator, NamedTuple

import numpy as np

TILE = 8
TILE_CELLS = TILE**3

# face directions: -x, +x, -y, +y, -z, +z
DIRS = np.array(
    [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]],
    dtype=np.int64,
)
# child octant o = (di << 2) | (dj << 1) | dk
OCTANTS = np.array(
    [[(o >> 2) & 1, (o >> 1) & 1, o & 1] for o in range(8)], dtype=np.int64
)


class TileKind(IntEnum):
    LEAF = 0
    INNER = 1
    GHOST = 2


class TileCoord(NamedTuple):
    level: int
    ijk: tuple[int, int, int]


class CellIndex(NamedTuple):
    tile: TileCoord
    offset: tuple[int, int, int]


@dataclass
class TileRecord:
    kind: TileKind
    neighbors: tuple[TileCoord | None, ...]
    parent: TileCoord | None
    children: tuple[TileCoord, ...]


def cell_size(level: int) -> float:
    return 2.0**-level / TILE


def _shift(t, s):
    return (t[0] >> s, t[1] >> s, t[2] >> s)


def _children(t):
    return [(2 * t[0] + a, 2 * t[1] + b, 2 * t[2] + c) for a, b, c in OCTANTS.tolist()]


def _in_domain(t, dims):
    return 0 <= t[0] < dims[0] and 0 <= t[1] < dims[1] and 0 <= t[2] < dims[2]


def _tile_keys(ijk: np.ndarray, dims) -> np.ndarray:
    ijk = np.asarray(ijk, dtype=np.int64)
    return (ijk[..., 0] * dims[1] + ijk[..., 1]) * dims[2] + ijk[..., 2]


@dataclass
class AdaptiveGrid:
    """Graded octree of tiles.

    Parameters
    ----------
    domain_extent : tuple of int
        Number of level-0 tiles along each axis.
    leaves : dict
        Level -> sorted ``(n, 3)`` array of Leaf tile coordinates.
    inner, ghost : dict
        Level -> sorted ``(n, 3)`` arrays of Inner and Ghost tiles.
    """

    domain_extent: tuple[int, int, int]
    leaves: dict[int, np.ndarray]
    inner: dict[int, np.ndarray]
    ghost: dict[int, np.ndarray]
    _layout: CellLayout | None = field(default=None, repr=False, compare=False)
    _tiles: dict | None = field(default=None, repr=False, compare=False)

    @property
    def level_range(self) -> tuple[int, int]:
        lv = [lvl for lvl, t in self.leaves.items() if len(t)]
        return min(lv), max(lv)

    @property
    def max_level(self) -> int:
        return self.level_range[1]

    def dims(self, level: int) -> tuple[int, int, int]:
        return tuple(e << level for e in self.domain_extent)

    def active_tiles(self, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Leaf and Inner tiles of a level, sorted, with their kinds."""
        lv = self.leaves.get(level, np.zeros((0, 3), np.int64))
        iv = self.inner.get(level, np.zeros((0, 3), np.int64))
        ijk = np.concatenate([lv, iv])
        kind = np.concatenate(
            [np.full(len(lv), TileKind.LEAF), np.full(len(iv), TileKind.INNER)]
        ).astype(np.int8)
        order = np.argsort(_tile_keys(ijk, self.dims(level)), kind="stable")
        return ijk[order], kind[order]

    def n_leaf_cells(self) -> int:
        return sum(len(t) for t in self.leaves.values()) * TILE_CELLS

    @property
    def tiles(self) -> dict[TileCoord, TileRecord]:
        """Tile map with cached same-level neighbour, parent and child handles."""
        if self._tiles is None:
            self._tiles = self._tile_map()
        return self._tiles

    def _tile_map(self):
        kinds = {}
        for src, kind in ((self.leaves, TileKind.LEAF), (self.inner, TileKind.INNER),
                          (self.ghost, TileKind.GHOST)):
            for lvl, arr in src.items():
                for t in map(tuple, arr.tolist()):
                    kinds[TileCoord(lvl, t)] = kind
        out = {}
        for tc, kind in kinds.items():
            lvl, t = tc
            nbrs = []
            for d in DIRS.tolist():
                q = TileCoord(lvl, (t[0] + d[0], t[1] + d[1], t[2] + d[2]))
                nbrs.append(q if q in kinds else None)
            parent = TileCoord(lvl - 1, _shift(t, 1)) if lvl > 0 else None
            if kind == TileKind.GHOST:
                parent = None
            kids = ()
            if kind == TileKind.INNER:
                kids = tuple(TileCoord(lvl + 1, c) for c in _children(t))
            out[tc] = TileRecord(kind, tuple(nbrs), parent, kids)
        return out

    @property
    def layout(self) -> CellLayout:
        if self._layout is None:
            self._layout = CellLayout.from_grid(self)
        return self._layout

    # -- serialization ---------------------------------------------------
    def to_json(self) -> str:
        doc = {
            "domain_extent": list(self.domain_extent),
            "leaves": {str(k): v.tolist() for k, v in sorted(self.leaves.items()) if len(v)},
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> AdaptiveGrid:
        doc = json.loads(text)
        leaves = {int(k): [tuple(t) for t in v] for k, v in doc["leaves"].items()}
        grid = grid_from_leaves(tuple(doc["domain_extent"]), leaves)
        check_partition(grid)
        check_grading(grid)
        return grid


def build_grid(
    domain_extent, target_level_fn: Callable[[TileCoord], int], max_level: int = 12
) -> AdaptiveGrid:
    """Build a graded octree from a per-tile target level.

    A tile is subdivided while ``target_level_fn(tile) > tile.level``.  The
    leaves are then refined until face-adjacent leaves differ by at most one
    level.

    Parameters
    ----------
    domain_extent : int or tuple of int
        Level-0 tiles per axis.
    target_level_fn : callable
        Maps a :class:`TileCoord` to the desired leaf level of that region.
    max_level : int
        Safety cap on refinement depth.
    """
    if np.isscalar(domain_extent):
        domain_extent = (int(domain_extent),) * 3
    extent = tuple(int(e) for e in domain_extent)
    if len(extent) != 3 or min(extent) <= 0:
        raise ValueError(f"empty domain extent {domain_extent!r}")

    leaves: dict[int, set] = {}
    frontier = [(i, j, k) for i in range(extent[0]) for j in range(extent[1])
                for k in range(extent[2])]
    level = 0
    while frontier:
        nxt = []
        for t in frontier:
            target = int(target_level_fn(TileCoord(level, t)))
            if target < 0:
                raise ValueError(f"negative target level {target} at {t}")
            if target > level and level < max_level:
                nxt.extend(_children(t))
            else:
                leaves.setdefault(level, set()).add(t)
        frontier = nxt
        level += 1
    _repair_grading(leaves, extent)
    return grid_from_leaves(extent, leaves)


def _repair_grading(leaves: dict[int, set], extent) -> None:
    """Refine coarse leaves until face neighbours differ by at most a level."""
    changed = True
    while changed:
        changed = False
        for lvl in sorted(leaves, reverse=True):
            if lvl < 2:
                continue
            dims = tuple(e << lvl for e in extent)
            for t in sorted(leaves[lvl]):
                for d in DIRS.tolist():
                    q = (t[0] + d[0], t[1] + d[1], t[2] + d[2])
                    if not _in_domain(q, dims):
                        continue
                    for m in range(lvl - 2, -1, -1):
                        p = _shift(q, lvl - m)
                        if p in leaves.get(m, ()):
                            leaves[m].remove(p)
                            leaves.setdefault(m + 1, set()).update(_children(p))
                            changed = True
                            break


def grid_from_leaves(extent, leaves) -> AdaptiveGrid:
    """Assemble Inner and Ghost tiles above a given set of Leaf tiles."""
    extent = tuple(int(e) for e in extent)
    leaf_sets = {lvl: set(map(tuple, ts)) for lvl, ts in leaves.items() if len(ts)}
    inner_sets: dict[int, set] = {}
    for lvl, ts in leaf_sets.items():
        for t in ts:
            for m in range(lvl):
                inner_sets.setdefault(m, set()).add(_shift(t, lvl - m))
    ghost_sets: dict[int, set] = {}
    for lvl, ts in leaf_sets.items():
        if lvl == 0:
            continue
        dims = tuple(e << lvl for e in extent)
        inner_l = inner_sets.get(lvl, set())
        for t in ts:
            for d in DIRS.tolist():
                q = (t[0] + d[0], t[1] + d[1], t[2] + d[2])
                if _in_domain(q, dims) and q not in ts and q not in inner_l:
                    ghost_sets.setdefault(lvl, set()).add(q)

    def pack(sets):
        out = {}
        for lvl, ts in sets.items():
            arr = np.array(sorted(ts), dtype=np.int64).reshape(-1, 3)
            out[lvl] = arr
        return out

    return AdaptiveGrid(extent, pack(leaf_sets), pack(inner_sets), pack(ghost_sets))


def check_grading(grid: AdaptiveGrid) -> None:
    """Raise if any two face-adjacent leaves differ by more than one level."""
    leaf_sets = {lvl: set(map(tuple, t.tolist())) for lvl, t in grid.leaves.items()}
    for lvl, ts in leaf_sets.items():
        dims = grid.dims(lvl)
        for t in ts:
            for d in DIRS.tolist():
                q = (t[0] + d[0], t[1] + d[1], t[2] + d[2])
                if not _in_domain(q, dims):
                    continue
                for m in range(lvl - 2, -1, -1):
                    if _shift(q, lvl - m) in leaf_sets.get(m, ()):
                        raise ValueError(f"grading violated at level {lvl} tile {t}")


def check_partition(grid: AdaptiveGrid) -> None:
    """Raise unless the leaves cover the domain exactly once."""
    vol = sum(len(t) * 8.0**-lvl for lvl, t in grid.leaves.items())
    if not np.isclose(vol, np.prod(grid.domain_extent), rtol=0, atol=1e-12):
        raise ValueError("leaf tiles do not cover the domain")
    for lvl, ts in grid.leaves.items():
        for m in range(lvl):
            anc = set(map(tuple, (ts >> (lvl - m)).tolist()))
            if anc & set(map(tuple, grid.leaves.get(m, np.zeros((0, 3))).tolist())):
                raise ValueError("overlapping leaf tiles")


def leaf_cells(grid: AdaptiveGrid, level: int) -> Iterator[CellIndex]:
    """Yield every cell of every Leaf tile at ``level`` in lexicographic order."""
    for t in grid.leaves.get(level, np.zeros((0, 3), np.int64)).tolist():
        tc = TileCoord(level, tuple(t))
        for a in range(TILE):
            for b in range(TILE):
                for c in range(TILE):
                    yield CellIndex(tc, (a, b, c))


def coarse_neighbor(grid: AdaptiveGrid, cell: CellIndex, face: int) -> CellIndex | None:
    """Coarse leaf cell behind a Ghost face, or ``None`` for same-level faces.

    Raises
    ------
    ValueError
        If the face lies on the domain boundary.
    """
    lvl, t = cell.tile
    g = np.array(t) * TILE + np.array(cell.offset) + DIRS[face]
    dims = np.array(grid.dims(lvl)) * TILE
    if np.any(g < 0) or np.any(g >= dims):
        raise ValueError("face lies on the domain boundary")
    q = tuple((g // TILE).tolist())
    rec = grid.tiles.get(TileCoord(lvl, q))
    if rec is None or rec.kind != TileKind.GHOST:
        return None
    gc = g >> 1
    return CellIndex(TileCoord(lvl - 1, tuple((gc // TILE).tolist())),
                     tuple((gc % TILE).tolist()))


# ---------------------------------------------------------------------------
# flat cell layout


@dataclass
class CellLayout:
    """Leaf and Inner cells of every level in one contiguous index space.

    Cells of level ``l`` occupy ``[offset[l], offset[l] + count[l])``; within a
    level, tiles are in lexicographic order and cells in ``a*64 + b*8 + c``
    order.

    Attributes
    ----------
    nbr : (6, N) int32
        Same-level Leaf/Inner face neighbour, -1 for ghost or boundary faces.
    boundary : (6, N) bool
        Face lies on the domain boundary.
    parent : (N,) int32
        Inner cell at the next coarser level containing the cell (-1 at level 0).
    children : (N, 8) int32
        Child cells of Inner cells by octant, -1 for Leaf cells.
    ghost_cell, ghost_dir, ghost_src, ghost_parent : int32 arrays
        One entry per Leaf-cell face whose neighbour is a coarser leaf: the
        fine cell, face direction, the coarse leaf cell and the fine cell's
        parent.  Sorted by ``ghost_cell``.
    """

    extent: tuple[int, int, int]
    levels: np.ndarray
    offset: np.ndarray
    count: np.ndarray
    level: np.ndarray
    coords: np.ndarray
    is_leaf: np.ndarray
    color: np.ndarray
    nbr: np.ndarray
    boundary: np.ndarray
    parent: np.ndarray
    children: np.ndarray
    ghost_cell: np.ndarray
    ghost_dir: np.ndarray
    ghost_src: np.ndarray
    ghost_parent: np.ndarray
    ghost_offset: np.ndarray

    @property
    def n(self) -> int:
        return int(self.level.shape[0])

    def cell_range(self, level: int) -> tuple[int, int]:
        lo = int(self.offset[level])
        return lo, lo + int(self.count[level])

    def ghost_range(self, level: int) -> tuple[int, int]:
        return int(self.ghost_offset[level]), int(self.ghost_offset[level + 1])

    def h(self) -> np.ndarray:
        return 2.0 ** -self.level.astype(np.float64) / TILE

    def centers(self) -> np.ndarray:
        return (self.coords + 0.5) * self.h()[:, None]

    def leaf_index(self) -> np.ndarray:
        return np.flatnonzero(self.is_leaf)

    def lookup(self, level: int, coords: np.ndarray) -> np.ndarray:
        """Global index of cells at integer ``coords`` (-1 where absent)."""
        return self._lookups[level](coords)

    @classmethod
    def from_grid(cls, grid: AdaptiveGrid) -> CellLayout:
        lmax = grid.max_level
        nlev = lmax + 1
        tiles, kinds, keys = [], [], []
        count = np.zeros(nlev, np.int64)
        for lvl in range(nlev):
            ijk, kind = grid.active_tiles(lvl)
            tiles.append(ijk)
            kinds.append(kind)
            keys.append(_tile_keys(ijk, grid.dims(lvl)))
            count[lvl] = len(ijk) * TILE_CELLS
        offset = np.zeros(nlev + 1, np.int64)
        offset[1:] = np.cumsum(count)
        n = int(offset[-1])

        local = np.indices((TILE,) * 3).reshape(3, -1).T  # (512, 3)

        def make_lookup(lvl):
            dims = grid.dims(lvl)
            k = keys[lvl]

            def fn(g):
                g = np.asarray(g, dtype=np.int64)
                out = np.full(g.shape[:-1], -1, np.int64)
                t = g // TILE
                inside = np.all((g >= 0) & (g < np.array(dims) * TILE), axis=-1)
                tk = _tile_keys(np.where(inside[..., None], t, 0), dims)
                pos = np.searchsorted(k, tk)
                pos = np.minimum(pos, max(len(k) - 1, 0))
                hit = inside & (len(k) > 0)
                if len(k):
                    hit &= k[pos] == tk
                o = g % TILE
                loc = o[..., 0] * TILE * TILE + o[..., 1] * TILE + o[..., 2]
                out[hit] = offset[lvl] + pos[hit] * TILE_CELLS + loc[hit]
                return out

            return fn

        lookups = [make_lookup(lvl) for lvl in range(nlev)]

        level = np.repeat(np.arange(nlev, dtype=np.int8), count)
        coords = np.zeros((n, 3), np.int32)
        is_leaf = np.zeros(n, bool)
        for lvl in range(nlev):
            lo, hi = offset[lvl], offset[lvl + 1]
            if hi == lo:
                continue
            g = (tiles[lvl][:, None, :] * TILE + local[None, :, :]).reshape(-1, 3)
            coords[lo:hi] = g
            is_leaf[lo:hi] = np.repeat(kinds[lvl] == TileKind.LEAF, TILE_CELLS)
        color = (coords.sum(axis=1) & 1).astype(np.int8)

        nbr = np.full((6, n), -1, np.int32)
        boundary = np.zeros((6, n), bool)
        parent = np.full(n, -1, np.int32)
        children = np.full((n, 8), -1, np.int32)
        gparts = []
        for lvl in range(nlev):
            lo, hi = offset[lvl], offset[lvl + 1]
            if hi == lo:
                continue
            g = coords[lo:hi].astype(np.int64)
            dims = np.array(grid.dims(lvl)) * TILE
            for d in range(6):
                q = g + DIRS[d]
                inside = np.all((q >= 0) & (q < dims), axis=1)
                idx = lookups[lvl](q)
                nbr[d, lo:hi] = idx
                boundary[d, lo:hi] = ~inside
                if lvl > 0:
                    gh = inside & (idx < 0)
                    if np.any(gh):
                        cells = np.flatnonzero(gh) + lo
                        src = lookups[lvl - 1](q[gh] >> 1)
                        if np.any(src < 0) or not np.all(is_leaf[src]):
                            raise ValueError("ghost face without a coarse leaf behind it")
                        gparts.append((cells, np.full(len(cells), d), src))
            if lvl > 0:
                parent[lo:hi] = lookups[lvl - 1](g >> 1)
            inner = ~is_leaf[lo:hi]
            if np.any(inner) and lvl + 1 < nlev:
                gi = g[inner]
                kids = lookups[lvl + 1](2 * gi[:, None, :] + OCTANTS[None, :, :])
                children[lo:hi][inner] = kids
        if gparts:
            gc = np.concatenate([p[0] for p in gparts])
            gd = np.concatenate([p[1] for p in gparts])
            gs = np.concatenate([p[2] for p in gparts])
            order = np.lexsort((gd, gc))
            gc, gd, gs = gc[order], gd[order], gs[order]
        else:
            gc = gd = gs = np.zeros(0, np.int64)
        glevel = level[gc].astype(np.int64) if len(gc) else np.zeros(0, np.int64)
        ghost_offset = np.searchsorted(glevel, np.arange(nlev + 1))

        out = cls(
            extent=grid.domain_extent,
            levels=np.arange(nlev),
            offset=offset,
            count=count,
            level=level,
            coords=coords,
            is_leaf=is_leaf,
            color=color,
            nbr=nbr,
            boundary=boundary,
            parent=parent,
            children=children,
            ghost_cell=gc.astype(np.int32),
            ghost_dir=gd.astype(np.int32),
            ghost_src=gs.astype(np.int32),
            ghost_parent=parent[gc].astype(np.int32),
            ghost_offset=ghost_offset.astype(np.int64),
        )
        out._lookups = lookups
        return out
