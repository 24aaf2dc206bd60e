"""Accuracy and convergence experiments on uniform, sphere and star grids."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import AdaptiveGrid, build_grid
from .hierarchy import TransferConfig, build_hierarchy
from .operator import (
    FACE_SAME,
    BoundaryPolicy,
    CellKind,
    PoissonSystem,
    build_system,
    divergence,
    subtract_gradient,
    uniform_face_velocity,
)
from .pcg import SolveConfig, SolveReport, pcg_solve
from .scenes import SceneSdf, Sphere, Star, band_target_levels, tank_scene, uniform_target

GRIDS = ("uniform", "sphere", "star")
EXPERIMENTS = ("laplacian", "poisson_sin", "projection_static", "cycle_compare",
               "galerkin_check")


@dataclass
class ExperimentConfig:
    experiment: str = "poisson_sin"
    grids: tuple[str, ...] = GRIDS
    l0s: tuple[int, ...] = (1, 2, 3)
    mu: int = 1
    beta: float = 2.0
    nu_level: int = 2
    nu_base: int = 10
    coarsest_threshold: int = 512
    tol: float | None = None
    max_iters: int = 100
    precision: str = "double"
    boundary: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        bad = [g for g in self.grids if g not in GRIDS]
        if bad:
            raise ValueError(f"unknown grid(s) {bad}")
        if self.experiment == "projection_static" and "uniform" in self.grids:
            raise ValueError("projection_static needs an obstacle (sphere or star grid)")
        if self.precision not in ("double", "single"):
            raise ValueError("precision must be 'double' or 'single'")
        self.grids = tuple(self.grids)
        self.l0s = tuple(int(v) for v in self.l0s)

    @property
    def dtype(self):
        return np.float64 if self.precision == "double" else np.float32

    def transfer(self, **over) -> TransferConfig:
        kw = dict(beta=self.beta, mu=self.mu, nu_level=self.nu_level, nu_base=self.nu_base,
                  coarsest_threshold=self.coarsest_threshold)
        kw.update(over)
        return TransferConfig(**kw)


@dataclass
class MetricRow:
    grid: str
    l0: int
    root_h: float
    metric: str
    value: float


@dataclass
class ExperimentResult:
    rows: list[MetricRow] = field(default_factory=list)
    reports: dict[str, dict] = field(default_factory=dict)

    def add(self, grid, l0, metric, value):
        self.rows.append(MetricRow(grid, int(l0), root_h(l0), metric, float(value)))

    def value(self, grid, metric, l0=None) -> float:
        for r in self.rows:
            if r.grid == grid and r.metric == metric and (l0 is None or r.l0 == l0):
                return r.value
        raise KeyError((grid, metric, l0))

    def series(self, grid, metric):
        pts = [(r.root_h, r.value) for r in self.rows if r.grid == grid and r.metric == metric]
        return [p[0] for p in pts], [p[1] for p in pts]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["grid", "l0", "root_h", "metric", "value"])
        for r in self.rows:
            w.writerow([r.grid, r.l0, repr(r.root_h), r.metric, repr(r.value)])
        return buf.getvalue()


def root_h(l0: int) -> float:
    return 2.0**-l0 / 8


# ---------------------------------------------------------------------------
# metrics


def rms_v(errors, volumes) -> float:
    """Volume-weighted RMS ``sqrt(sum V e^2 / sum V)``."""
    e = np.asarray(errors, np.float64)
    v = np.asarray(volumes, np.float64)
    if e.size == 0 or e.shape != v.shape:
        raise ValueError("errors and volumes must be non-empty and equally shaped")
    if np.any(v <= 0):
        raise ValueError("volumes must be positive")
    return float(np.sqrt(np.sum(v * e * e) / np.sum(v)))


def _slope(x, y) -> float:
    x = np.asarray(x, np.float64)
    y = np.asarray(y, np.float64)
    if len(x) < 2 or np.ptp(x) == 0:
        raise ValueError("degenerate series")
    return float(np.polyfit(x, y, 1)[0])


def fit_rate(h, errors) -> float:
    """Least-squares slope of ``log2 e`` against ``log2(1/h)`` (second order -> 2)."""
    h = np.asarray(h, np.float64)
    e = np.asarray(errors, np.float64)
    if np.any(h <= 0) or np.any(e <= 0):
        raise ValueError("cell sizes and errors must be positive")
    return -_slope(np.log2(1.0 / h), np.log2(e))


def mean_reduction_factor(history, initial: float = 1.0) -> float:
    """Geometric-mean residual reduction per iteration, ``(r_0 / r_n) ** (1 / n)``."""
    r = np.asarray(history, np.float64)
    if len(r) == 0 or r[-1] <= 0 or initial <= 0:
        raise ValueError("need a positive residual history")
    return float((initial / r[-1]) ** (1.0 / len(r)))


def fit_reduction_factor(history) -> float:
    """Per-iteration residual reduction factor from a least-squares fit.

    ``history[k]`` is the residual after iteration ``k + 1``.  Histories
    shorter than two points give NaN.
    """
    r = np.asarray(history, np.float64)
    if len(r) < 2:
        return float("nan")
    if np.any(r <= 0):
        raise ValueError("residuals must be positive")
    return float(2.0 ** -_slope(np.arange(1, len(r) + 1), np.log2(r)))


# ---------------------------------------------------------------------------
# grids and fields


def shape_for(grid: str):
    return {"sphere": Sphere(), "star": Star()}.get(grid)


def make_grid(grid: str, l0: int) -> AdaptiveGrid:
    if grid == "uniform":
        return build_grid(1, uniform_target(l0))
    return build_grid(1, band_target_levels(shape_for(grid), l0))


def laplacian_test_function(x):
    x = np.asarray(x, np.float64)
    r2 = np.sum(x * x, axis=-1)
    return r2 * np.exp(-np.prod(x, axis=-1))


def laplacian_test_exact(x):
    """Exact Laplacian of ``(x^2 + y^2 + z^2) exp(-xyz)``."""
    x = np.asarray(x, np.float64)
    a, b, c = x[..., 0], x[..., 1], x[..., 2]
    e = np.exp(-a * b * c)
    r2 = a * a + b * b + c * c
    return e * (6.0 - 12.0 * a * b * c + r2 * (b * b * c * c + a * a * c * c + a * a * b * b))


def sinusoid(x):
    return np.prod(np.sin(2.0 * np.pi * np.asarray(x, np.float64)), axis=-1)


def sinusoid_solution(x):
    """Solution of ``laplacian f = 4 pi sin(2 pi x) sin(2 pi y) sin(2 pi z)``."""
    return -sinusoid(x) / (3.0 * np.pi)


def interior_mask(system: PoissonSystem) -> np.ndarray:
    """Active leaf cells whose six faces are open to same-level Fluid leaves."""
    faces, coef = system.faces, system.face_coef
    bad = np.zeros(system.n, bool)
    same = faces.type == FACE_SAME
    ok = same & (coef != 0)
    ok[same] &= system.kinds[faces.other[same]] == CellKind.FLUID
    np.logical_or.at(bad, faces.cell[~ok], True)
    far = ~ok & (faces.other >= 0)
    np.logical_or.at(bad, faces.other[far], True)
    return system.active_leaf & ~bad


# ---------------------------------------------------------------------------
# experiments


def run_laplacian_accuracy(cfg: ExperimentConfig) -> ExperimentResult:
    """Operator applied to a smooth function versus its exact Laplacian."""
    res = ExperimentResult()
    for grid in cfg.grids:
        for l0 in cfg.l0s:
            g = make_grid(grid, l0)
            sys_ = build_system(g, None, BoundaryPolicy.neumann_layer(), keep_faces=True)
            x = g.layout.centers()
            f = laplacian_test_function(x)
            V = sys_.volumes()
            lap = sys_.apply(f) / V
            err = lap + laplacian_test_exact(x)
            inner = interior_mask(sys_)
            fluid = sys_.active_leaf
            res.add(grid, l0, "rms_error", rms_v(err[inner], V[inner]))
            res.add(grid, l0, "rms_error_all_fluid", rms_v(err[fluid], V[fluid]))
            res.add(grid, l0, "leaf_cells", g.n_leaf_cells())
        _add_rate(res, grid, "rms_error")
        _add_rate(res, grid, "rms_error_all_fluid")
    return res


def _add_rate(res: ExperimentResult, grid: str, metric: str):
    h, e = res.series(grid, metric)
    if len(h) >= 2 and min(e) > 0:
        res.add(grid, -1, metric + "_rate", fit_rate(h, e))


def sin_policy(cfg: ExperimentConfig) -> BoundaryPolicy:
    name = cfg.boundary or "dirichlet_wall"
    if name == "dirichlet_wall":
        return BoundaryPolicy.dirichlet_walls()
    if name == "neumann_layer":
        return BoundaryPolicy.neumann_layer()
    raise ValueError(f"unknown boundary {name!r}")


def _error(system: PoissonSystem, x, exact, mask, V) -> float:
    """Mean-shifted RMS_V difference (the solution is compared up to a constant)."""
    u = np.asarray(x, np.float64)[mask]
    v = exact[mask]
    w = V[mask]
    u = u - np.sum(w * u) / np.sum(w)
    v = v - np.sum(w * v) / np.sum(w)
    return rms_v(u - v, w)


def run_poisson_sin(cfg: ExperimentConfig) -> ExperimentResult:
    """Solve ``-laplacian p = -4 pi sin sin sin`` and compare with the exact solution."""
    res = ExperimentResult()
    tol = cfg.tol or 1e-8
    policy = sin_policy(cfg)
    for grid in cfg.grids:
        for l0 in cfg.l0s:
            g = make_grid(grid, l0)
            sys_ = build_system(g, None, policy, dtype=cfg.dtype)
            x = g.layout.centers()
            V = sys_.volumes()
            mask = sys_.active_leaf
            b = np.where(mask, -4.0 * np.pi * sinusoid(x) * V, 0.0)
            exact = sinusoid_solution(x)
            errs = []
            sol, rep = pcg_solve(
                sys_, b, SolveConfig(tol_relative=tol, max_iters=cfg.max_iters),
                transfer=cfg.transfer(),
                callback=lambda k, xk: errs.append(_error(sys_, xk, exact, mask, V)),
            )
            err = _error(sys_, sol, exact, mask, V)
            res.add(grid, l0, "solution_rms_error", err)
            res.add(grid, l0, "iterations", rep.iterations)
            res.add(grid, l0, "converged", float(rep.converged))
            rel = rep.relative_history()
            res.add(grid, l0, "reduction_factor", mean_reduction_factor(rel))
            res.add(grid, l0, "fitted_reduction_factor", fit_reduction_factor(rel))
            res.add(grid, l0, "plateau_iteration", plateau_iteration(errs, err))
            for k, (r, e) in enumerate(zip(rel, errs), start=1):
                res.add(grid, l0, f"iter{k:02d}_relres", r)
                res.add(grid, l0, f"iter{k:02d}_rms_error", e)
            rep.metrics = {"solution_rms_error": err, "leaf_cells": g.n_leaf_cells()}
            res.reports[f"{grid}_l0{l0}"] = rep.to_dict()
        _add_rate(res, grid, "solution_rms_error")
    return res


def plateau_iteration(errors, final, rel: float = 0.1) -> int:
    """First iteration from which the error stays within ``rel`` of ``final``."""
    k = len(errors)
    for i in range(len(errors) - 1, -1, -1):
        if abs(errors[i] - final) <= rel * final:
            k = i + 1
        else:
            break
    return k


def tank_system(grid: str, l0: int, dtype=np.float64) -> PoissonSystem:
    g = make_grid(grid, l0)
    tank = tank_scene(shape_for(grid))
    return build_system(g, tank.scene, tank.policy, dtype=dtype, keep_faces=True)


def projection_rhs(system: PoissonSystem, velocity=(0.0, -1.0, 0.0)):
    u = uniform_face_velocity(system, velocity)
    div0 = divergence(system, u)
    b = -div0 * system.volumes()
    return u, div0, b


def run_projection_static(cfg: ExperimentConfig) -> ExperimentResult:
    """Tank with a static obstacle, uniform downward flow, one projection."""
    res = ExperimentResult()
    tol = cfg.tol or 1e-6
    mu = cfg.mu if cfg.mu != 1 else 2
    for grid in cfg.grids:
        for l0 in cfg.l0s:
            sys_ = tank_system(grid, l0, cfg.dtype)
            u, div0, b = projection_rhs(sys_)
            V = sys_.volumes()
            mask = sys_.active_leaf
            divs = []

            def track(k, p):
                d = div0 + sys_.apply(p) / V
                divs.append(rms_v(d[mask], V[mask]))

            p, rep = pcg_solve(sys_, b, SolveConfig(tol_relative=tol, max_iters=cfg.max_iters),
                               transfer=cfg.transfer(mu=mu), callback=track)
            u1 = subtract_gradient(sys_, u, p)
            div1 = divergence(sys_, u1)
            final = rms_v(div1[mask], V[mask])
            res.add(grid, l0, "divergence_rms", final)
            res.add(grid, l0, "initial_divergence_rms", rms_v(div0[mask], V[mask]))
            res.add(grid, l0, "iterations", rep.iterations)
            res.add(grid, l0, "converged", float(rep.converged))
            rel = rep.relative_history()
            res.add(grid, l0, "reduction_factor", mean_reduction_factor(rel))
            res.add(grid, l0, "fitted_reduction_factor", fit_reduction_factor(rel))
            res.add(grid, l0, "plateau_iteration", plateau_iteration(divs, final))
            for k, (r, d) in enumerate(zip(rel, divs), start=1):
                res.add(grid, l0, f"iter{k:02d}_relres", r)
                res.add(grid, l0, f"iter{k:02d}_divergence_rms", d)
            rep.metrics = {"divergence_rms": final}
            res.reports[f"{grid}_l0{l0}"] = rep.to_dict()
        _add_rate(res, grid, "divergence_rms")
    return res


def iterations_to(history, tol) -> int | None:
    for k, r in enumerate(history, start=1):
        if r <= tol:
            return k
    return None


def run_cycle_compare(cfg: ExperimentConfig) -> ExperimentResult:
    """Cut-cell tank solved with mu = 1, mu = 2 and the geometric-coarsening variant."""
    res = ExperimentResult()
    tol = cfg.tol or 1e-5
    variants = (("mu2", dict(mu=2)), ("mu1", dict(mu=1)), ("gmg_mu1", dict(mu=1, geometric=True)))
    for grid in cfg.grids:
        if grid == "uniform":
            continue
        for l0 in cfg.l0s:
            for name, over in variants:
                sys_ = tank_system(grid, l0, cfg.dtype)
                _, _, b = projection_rhs(sys_)
                hier = build_hierarchy(sys_, cfg.transfer(**over))
                # no stagnation cut-off: a stalled run should stay visible
                solve = SolveConfig(tol_relative=tol, max_iters=cfg.max_iters,
                                    stagnation_window=cfg.max_iters + 1)
                _, rep = pcg_solve(sys_, b, solve, hierarchy=hier)
                rel = rep.relative_history()
                k = iterations_to(rel, tol)
                res.add(grid, l0, f"{name}_iterations", k if k is not None else -1)
                res.add(grid, l0, f"{name}_final_relres", rel[-1] if rel else 1.0)
                res.add(grid, l0, f"{name}_iterations_run", rep.iterations)
                for i, r in enumerate(rel, start=1):
                    res.add(grid, l0, f"{name}_iter{i:03d}_relres", r)
                res.reports[f"{grid}_l0{l0}_{name}"] = rep.to_dict()
    return res


def run_galerkin_check(cfg: ExperimentConfig, n_masks: int = 200, seed: int = 0) -> ExperimentResult:
    """Matrix-free coarsening against the dense triple product on random patches."""
    from .oracle import random_patch_check

    res = ExperimentResult()
    rng = np.random.default_rng(seed)
    worst = {4: 0.0, 8: 0.0}
    for t in range(n_masks):
        n = 4 if t % 2 == 0 else 8
        worst[n] = max(worst[n], random_patch_check(n, rng))
    for n, w in worst.items():
        res.rows.append(MetricRow(f"patch{n}", -1, 1.0 / n, "max_rel_error", w))
    return res


RUNNERS = {
    "laplacian": run_laplacian_accuracy,
    "poisson_sin": run_poisson_sin,
    "projection_static": run_projection_static,
    "cycle_compare": run_cycle_compare,
    "galerkin_check": run_galerkin_check,
}


def run(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg)


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
