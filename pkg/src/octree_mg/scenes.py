"""Analytic signed-distance shapes, refinement targets and the tank scene."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import TileCoord

CENTER = (0.5, 0.5, 0.5)


class Shape:
    """Signed distance, negative inside."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __or__(self, other: Shape) -> Shape:
        return Union((self, other))

    def __invert__(self) -> Shape:
        return Complement(self)


@dataclass(frozen=True)
class Sphere(Shape):
    center: tuple[float, float, float] = CENTER
    radius: float = 0.25

    def __call__(self, x):
        d = np.asarray(x, dtype=np.float64) - np.asarray(self.center)
        return np.sqrt(np.einsum("...i,...i->...", d, d)) - self.radius


@dataclass(frozen=True)
class Star(Shape):
    """``r - (base + amp cos(k theta) cos(k phi))`` in spherical coordinates."""

    center: tuple[float, float, float] = CENTER
    base_radius: float = 0.237
    amplitude: float = 0.079
    frequency: int = 6

    def __call__(self, x):
        d = np.asarray(x, dtype=np.float64) - np.asarray(self.center)
        r = np.sqrt(np.einsum("...i,...i->...", d, d))
        safe = np.where(r > 0, r, 1.0)
        theta = np.arccos(np.clip(d[..., 2] / safe, -1.0, 1.0))
        phi = np.arctan2(d[..., 1], d[..., 0])
        k = self.frequency
        return r - (self.base_radius + self.amplitude * np.cos(k * theta) * np.cos(k * phi))


@dataclass(frozen=True)
class HalfSpace(Shape):
    """Points with ``n . x < offset`` are inside."""

    normal: tuple[float, float, float]
    offset: float

    def __call__(self, x):
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        return np.asarray(x, dtype=np.float64) @ n - self.offset


@dataclass(frozen=True)
class Complement(Shape):
    shape: Shape

    def __call__(self, x):
        return -self.shape(x)


@dataclass(frozen=True)
class Union(Shape):
    shapes: tuple[Shape, ...]

    def __call__(self, x):
        return np.minimum.reduce([s(x) for s in self.shapes])


@dataclass
class SceneSdf:
    """Solid and air level sets; either may be absent."""

    solid_phi: Callable[[np.ndarray], np.ndarray] | None = None
    air_phi: Callable[[np.ndarray], np.ndarray] | None = None


def tile_intersects(shape: Shape, tile: TileCoord) -> bool:
    """Conservative test for the zero level set crossing a tile."""
    edge = 2.0**-tile.level
    lo = np.asarray(tile.ijk, dtype=np.float64) * edge
    corners = lo + edge * np.array(
        [[a, b, c] for a in (0, 1) for b in (0, 1) for c in (0, 1)], dtype=np.float64
    )
    center = lo + 0.5 * edge
    vals = shape(np.vstack([corners, center[None]]))
    if vals.min() < 0 <= vals.max():
        return True
    return abs(vals[-1]) < 0.5 * np.sqrt(3.0) * edge


def band_target_levels(shape: Shape, l0: int) -> Callable[[TileCoord], int]:
    """Target ``l0 + 2`` on tiles crossing the surface and ``l0`` elsewhere."""
    if l0 < 0:
        raise ValueError("l0 must be non-negative")

    def target(tile: TileCoord) -> int:
        return l0 + 2 if tile_intersects(shape, tile) else l0

    return target


def uniform_target(l0: int) -> Callable[[TileCoord], int]:
    return lambda tile: l0


@dataclass
class TankScene:
    scene: SceneSdf
    policy: object
    obstacle: Shape | None = field(default=None)


def tank_scene(obstacle: Shape | None = None, air_layer: bool = True) -> TankScene:
    """Liquid tank: walls on the sides and bottom, open to air at the top (+y).

    The walls and the air are the outermost leaf-cell layers of the domain; the
    obstacle interior is solid.
    """
    from .operator import BoundaryPolicy

    scene = SceneSdf(solid_phi=obstacle)
    return TankScene(scene, BoundaryPolicy.tank(air_layer=air_layer), obstacle)
