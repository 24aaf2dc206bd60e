import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from octree_mg.grid import build_grid
from octree_mg.operator import BoundaryPolicy, build_system
from octree_mg.oracle import assemble_dense, dense_solve
from octree_mg.pcg import (
    Precondition,
    SolveConfig,
    dot,
    norm2,
    pcg_solve,
    project_nullspace,
)
from octree_mg.scenes import Sphere, tank_scene, uniform_target


def rhs(s, rng):
    return np.where(s.active_leaf, rng.normal(size=s.n), 0.0)


@pytest.fixture(scope="module")
def tank_two_level(two_level):
    tank = tank_scene(Sphere(radius=0.3))
    return build_system(two_level, tank.scene, tank.policy)


def test_zero_rhs(tank_two_level):
    x, rep = pcg_solve(tank_two_level, np.zeros(tank_two_level.n))
    assert np.all(x == 0) and rep.converged and rep.iterations == 0


def test_matches_dense_solve(tank_two_level, rng):
    s = tank_two_level
    b = rhs(s, rng)
    x, rep = pcg_solve(s, b, SolveConfig(tol_relative=1e-11, max_iters=100))
    assert rep.converged
    d = assemble_dense(s)
    ref = dense_solve(d, b[d.index])
    assert np.abs(x[d.index] - ref).max() <= 1e-7 * np.abs(ref).max()
    assert np.linalg.norm(s.residual(x, b)) <= 2e-11 * np.linalg.norm(b)


def test_pure_neumann_projection(closed_two_level, rng):
    s = closed_two_level
    b = rhs(s, rng)
    x, rep = pcg_solve(s, b, SolveConfig(tol_relative=1e-10))
    assert rep.converged
    m = s.active_leaf
    bp = b[m] - b[m].mean()
    r = s.apply(x)[m] - bp
    assert np.linalg.norm(r) <= 1e-9 * np.linalg.norm(bp)


def test_identity_preconditioner_converges(rng):
    g = build_grid(1, uniform_target(0))
    s = build_system(g, None, BoundaryPolicy.dirichlet_walls())
    _, rep = pcg_solve(s, rhs(s, rng), SolveConfig(tol_relative=1e-8, max_iters=300,
                                                    precondition="identity"))
    assert rep.converged
    _, rep_mg = pcg_solve(s, rhs(s, rng), SolveConfig(tol_relative=1e-8))
    assert rep_mg.iterations < rep.iterations


def test_termination_reasons(tank_two_level, rng):
    _, rep = pcg_solve(tank_two_level, rhs(tank_two_level, rng), SolveConfig(max_iters=1))
    assert rep.termination_reason == "max iterations" and not rep.converged
    with pytest.raises(FloatingPointError):
        b = rhs(tank_two_level, rng)
        b[np.flatnonzero(tank_two_level.active_leaf)[0]] = np.nan
        pcg_solve(tank_two_level, b)
    with pytest.raises(ValueError):
        SolveConfig(tol_relative=0)


def test_single_precision(rng):
    g = build_grid(1, uniform_target(1))
    s = build_system(g, None, BoundaryPolicy.dirichlet_walls(), dtype=np.float32)
    x, rep = pcg_solve(s, rhs(s, rng), SolveConfig(tol_relative=1e-5))
    assert rep.converged and x.dtype == np.float32


def test_deterministic(tank_two_level, rng):
    b = rhs(tank_two_level, rng)
    x1, r1 = pcg_solve(tank_two_level, b)
    x2, r2 = pcg_solve(tank_two_level, b)
    assert np.array_equal(x1, x2) and r1.residual_history == r2.residual_history
    json.dumps(r1.to_dict())
    assert r1.relative_history()[-1] <= 1e-6


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
def test_nullspace_projection(v):
    v = np.array(v)
    w = project_nullspace(v.copy())
    assert abs(w.mean()) <= 1e-9 * (np.abs(v).max() + 1)
    active = np.arange(len(v)) % 2 == 0
    w = project_nullspace(v.copy(), active)
    assert np.array_equal(w[~active], v[~active])


def test_nullspace_projection_empty():
    with pytest.raises(ValueError):
        project_nullspace(np.ones(3), np.zeros(3, bool))


def test_dot_double_accumulation():
    v = np.full(10**6, 0.1, np.float32)
    assert abs(dot(v, v) - 10**6 * float(np.float32(0.1)) ** 2) < 1e-6
    assert norm2(np.array([3.0, 4.0])) == 5.0


def test_precondition_enum():
    assert SolveConfig(precondition="mu_cycle").precondition is Precondition.MU_CYCLE
