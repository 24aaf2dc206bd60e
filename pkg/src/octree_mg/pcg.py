"""Preconditioned conjugate gradient on the composite operator."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from . import kernels as K
from .cycle import MuCyclePreconditioner
from .hierarchy import TransferConfig, build_hierarchy
from .operator import PoissonSystem


class Precondition(str, Enum):
    MU_CYCLE = "mu_cycle"
    IDENTITY = "identity"


@dataclass
class SolveConfig:
    tol_relative: float = 1e-6
    max_iters: int = 200
    precondition: Precondition = Precondition.MU_CYCLE
    nullspace_projection: bool | None = None  # None: decide from the system
    stagnation_window: int = 10

    def __post_init__(self):
        if not self.tol_relative > 0:
            raise ValueError("tol_relative must be positive")
        self.precondition = Precondition(self.precondition)


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list[float] = field(default_factory=list)
    initial_residual: float = 0.0
    rhs_norm: float = 0.0
    converged: bool = False
    termination_reason: str = ""
    wall_time: float = 0.0
    metrics: dict = field(default_factory=dict)

    def relative_history(self) -> list[float]:
        if self.rhs_norm == 0:
            return [0.0 for _ in self.residual_history]
        return [r / self.rhs_norm for r in self.residual_history]

    def to_dict(self) -> dict:
        return asdict(self)


def dot(v: np.ndarray, w: np.ndarray) -> float:
    """Inner product accumulated in double precision, fixed order."""
    return float(K.dot64(v, w))


def norm2(v: np.ndarray) -> float:
    return float(np.sqrt(K.dot64(v, v)))


def project_nullspace(v: np.ndarray, active: np.ndarray | None = None) -> np.ndarray:
    """Subtract the mean over active cells (in place on those cells) and return ``v``."""
    if active is None:
        active = np.ones(v.shape, bool)
    s, n = K.masked_sum64(v, active)
    if n == 0:
        raise ValueError("no active cells")
    v[active] -= v.dtype.type(s / n)
    return v


def pcg_solve(system: PoissonSystem, b: np.ndarray, config: SolveConfig | None = None,
              transfer: TransferConfig | None = None, hierarchy=None,
              callback: Callable[[int, np.ndarray], None] | None = None):
    """Solve ``A x = b`` on the leaf unknowns from ``x = 0``.

    Parameters
    ----------
    system : PoissonSystem
    b : ndarray
        Full-layout right-hand side (only active Leaf entries are used).
    config : SolveConfig
    transfer : TransferConfig
        Multigrid settings used when a hierarchy has to be built.
    hierarchy : Hierarchy, optional
        Reuse an existing hierarchy.
    callback : callable, optional
        Called as ``callback(k, x)`` after iteration ``k``.

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    config = config or SolveConfig()
    t0 = time.perf_counter()
    dtype = system.dtype
    mask = system.active_leaf
    project = config.nullspace_projection
    if project is None:
        project = system.pure_neumann
    b = np.where(mask, b, 0).astype(dtype)
    if not np.all(np.isfinite(b)):
        raise FloatingPointError("non-finite right-hand side")
    if project:
        project_nullspace(b, mask)
    if config.precondition == Precondition.MU_CYCLE:
        if hierarchy is None:
            hierarchy = build_hierarchy(system, transfer or TransferConfig())
        precond = MuCyclePreconditioner(hierarchy)
    else:
        def precond(r, out=None):
            if out is None:
                return r.copy()
            out[:] = r
            return out

    report = SolveReport()
    x = np.zeros(system.n, dtype)
    bnorm = norm2(b)
    report.rhs_norm = bnorm
    report.initial_residual = bnorm
    if bnorm == 0.0:
        report.converged = True
        report.termination_reason = "zero right-hand side"
        report.wall_time = time.perf_counter() - t0
        return x, report
    target = config.tol_relative * bnorm
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = dot(r, z)
    best_x, best_res = x.copy(), bnorm
    since_best = 0
    q = np.zeros_like(x)
    for k in range(1, config.max_iters + 1):
        system.apply(p, out=q)
        q[~mask] = 0
        pq = dot(p, q)
        if not np.isfinite(pq):
            raise FloatingPointError("non-finite value during PCG")
        if pq <= 0.0:
            report.termination_reason = "breakdown: non-positive curvature"
            break
        a = rz / pq
        x += dtype(a) * p
        r -= dtype(a) * q
        if project:
            project_nullspace(r, mask)
        res = norm2(r)
        report.residual_history.append(res)
        report.iterations = k
        if callback is not None:
            callback(k, x)
        if res < best_res:
            best_res, since_best = res, 0
            best_x[:] = x
        else:
            since_best += 1
        if res <= target:
            report.converged = True
            report.termination_reason = "tolerance reached"
            break
        if since_best >= config.stagnation_window:
            report.termination_reason = "stagnation"
            break
        precond(r, out=z)
        rz_new = dot(r, z)
        if rz_new == 0.0:
            report.termination_reason = "breakdown: zero preconditioned residual"
            break
        p *= dtype(rz_new / rz)
        p += z
        rz = rz_new
    else:
        report.termination_reason = "max iterations"
    if not report.converged and best_res < (report.residual_history or [bnorm])[-1]:
        x = best_x
    report.wall_time = time.perf_counter() - t0
    return x, report
