import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from octree_mg.grid import TileCoord
from octree_mg.operator import BoundaryPolicy, CellKind, build_system
from octree_mg.grid import build_grid
from octree_mg.scenes import (
    Complement,
    HalfSpace,
    Sphere,
    Star,
    Union,
    band_target_levels,
    tank_scene,
    uniform_target,
)

points = st.lists(st.floats(0, 1), min_size=3, max_size=3)


@given(points)
def test_sphere_distance(p):
    x = np.array(p)
    assert np.isclose(Sphere()(x), np.linalg.norm(x - 0.5) - 0.25)


@given(points)
def test_star_without_amplitude_is_sphere(p):
    x = np.array(p)
    assert np.isclose(Star(amplitude=0.0)(x), Sphere(radius=0.237)(x))


def test_star_radius_along_axes():
    s = Star()
    # on the +x axis theta = pi/2 and phi = 0: radius 0.237 + 0.079 cos(3 pi)
    assert np.isclose(s(np.array([0.5 + 0.158, 0.5, 0.5])), 0.0)
    # on the +z axis theta = 0 and phi = 0: radius 0.316
    assert np.isclose(s(np.array([0.5, 0.5, 0.5 + 0.316])), 0.0)


@given(points)
def test_boolean_shapes(p):
    x = np.array(p)
    a, b = Sphere(radius=0.2), HalfSpace((0, 1, 0), 0.3)
    assert Union((a, b))(x) == min(a(x), b(x))
    assert Complement(a)(x) == -a(x)
    assert (a | b)(x) == Union((a, b))(x)
    assert (~a)(x) == -a(x)


def test_sdf_is_deterministic():
    x = np.random.default_rng(0).random((100, 3))
    s = Star()
    assert np.array_equal(s(x), s(x.copy()))


def test_band_target():
    f = band_target_levels(Sphere(), 2)
    assert f(TileCoord(0, (0, 0, 0))) == 4
    assert f(TileCoord(2, (0, 0, 0))) == 2
    assert uniform_target(3)(TileCoord(0, (0, 0, 0))) == 3


def test_tank_without_obstacle_interior_fluid():
    g = build_grid(1, uniform_target(0))
    tank = tank_scene(None)
    s = build_system(g, tank.scene, tank.policy)
    lay = g.layout
    c = lay.coords
    interior = (c.min(1) > 0) & (c.max(1) < 7) & lay.is_leaf
    assert np.all(s.kinds[interior] == CellKind.FLUID)
    top = lay.boundary[3] & lay.is_leaf & ~lay.boundary[0] & ~lay.boundary[1] \
        & ~lay.boundary[4] & ~lay.boundary[5]
    assert np.all(s.kinds[top] == CellKind.DIRICHLET)
    assert np.all(s.kinds[lay.boundary[2] & lay.is_leaf] == CellKind.NEUMANN)
    assert not tank.policy.pure_neumann


def test_tank_obstacle_count_monotone():
    g = build_grid(1, uniform_target(1))
    counts = []
    for r in (0.1, 0.2, 0.3):
        tank = tank_scene(Sphere(radius=r))
        s = build_system(g, tank.scene, tank.policy)
        counts.append(int(np.sum(s.kinds == CellKind.NEUMANN)))
        inside = np.linalg.norm(g.layout.centers() - 0.5, axis=1) < r
        assert np.all(s.kinds[inside & g.layout.is_leaf] == CellKind.NEUMANN)
    assert counts[0] < counts[1] < counts[2]
    assert BoundaryPolicy.closed().pure_neumann
