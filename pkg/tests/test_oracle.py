import numpy as np
import pytest

from octree_mg.grid import build_grid
from octree_mg.operator import BoundaryPolicy, build_system
from octree_mg.oracle import (
    assemble_dense,
    conservation_defect,
    dense_solve,
    flux_audit,
    galerkin_triple,
    lattice_matrix,
    prolongation,
    random_patch,
    random_patch_check,
)
from octree_mg.scenes import uniform_target


def test_dense_symmetric_on_uniform_grid():
    s = build_system(build_grid(1, uniform_target(0)), None, BoundaryPolicy.dirichlet_walls())
    d = assemble_dense(s)
    assert d.n == 512 and d.is_symmetric()
    assert np.all(np.linalg.eigvalsh(d.matrix) > 0)


def test_dense_cap(closed_two_level):
    with pytest.raises(ValueError):
        assemble_dense(closed_two_level, cap=10)


def test_dense_solve_zero_and_nullspace():
    s = build_system(build_grid(1, uniform_target(0)), None, BoundaryPolicy.closed())
    d = assemble_dense(s)
    assert d.pure_neumann
    assert np.array_equal(dense_solve(d, np.zeros(d.n)), np.zeros(d.n))
    b = np.random.default_rng(0).normal(size=d.n)
    x = dense_solve(d, b)
    assert abs(x.mean()) < 1e-12
    assert np.allclose(d.matrix @ x, b - b.mean(), atol=1e-10)


def test_prolongation_columns():
    active = np.ones(64, bool)
    active[0] = False
    p = prolongation((4, 4, 4), active)
    assert p.shape == (64, 8)
    assert p.sum() == 63 and np.all(p.sum(axis=1)[1:] == 1)


def test_galerkin_of_all_fluid_patch():
    rng = np.random.default_rng(3)
    c, cm, nbr, active = random_patch(4, rng, p_fluid=1.0)
    a = lattice_matrix(c, cm, nbr)
    g = galerkin_triple(a, active, (4, 4, 4))
    assert np.allclose(g, g.T)


def test_random_patch_check_small():
    rng = np.random.default_rng(5)
    assert max(random_patch_check(4, rng) for _ in range(10)) <= 1e-12


def test_flux_audit_constant_and_random(closed_two_level):
    s = closed_two_level
    recs = flux_audit(s, np.ones(s.n))
    assert recs and all(r.fine_flux == 0 and r.coarse_flux == 0 for r in recs)
    x = np.random.default_rng(1).normal(size=s.n)
    recs = flux_audit(s, x)
    assert max(abs(r.mismatch) / r.scale for r in recs if r.scale > 0) <= 1e-12
    assert conservation_defect(s, x) <= 1e-12


def test_flux_audit_needs_faces(two_level):
    s = build_system(two_level, None, BoundaryPolicy.closed())
    with pytest.raises(ValueError):
        flux_audit(s, np.zeros(s.n))
