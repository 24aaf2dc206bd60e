"""Command-line entry point: one subcommand per experiment.

Results go to ``<out>/<experiment>.csv`` (deterministic, no timings) and
``<out>/<experiment>_reports.json`` (solver reports including wall times).
The worker count for numba is read from ``OCTREE_MG_WORKERS``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, GRIDS, ExperimentConfig, config_dict, run

log = logging.getLogger("octree_mg")
WORKERS_ENV = "OCTREE_MG_WORKERS"


def _csv_list(kind):
    def parse(text):
        return tuple(kind(v) for v in text.split(",") if v)
    return parse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="octree-mg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--grid", type=_csv_list(str), default=None,
                       help=f"comma-separated subset of {','.join(GRIDS)}")
        p.add_argument("--l0", type=_csv_list(int), default=None,
                       help="comma-separated root levels (default 1,2,3)")
        p.add_argument("--mu", type=int, default=None)
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--max-iters", type=int, default=None)
        p.add_argument("--precision", choices=("double", "single"), default=None)
        p.add_argument("--boundary", choices=("dirichlet_wall", "neumann_layer"), default=None,
                       help="outer boundary for poisson_sin")
        p.add_argument("--config", type=Path, default=None,
                       help="JSON file whose keys override the flags")
        p.add_argument("--out", type=Path, default=Path("results"))
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def make_config(args) -> ExperimentConfig:
    kw = {"experiment": args.experiment}
    flags = {"grids": args.grid, "l0s": args.l0, "mu": args.mu, "beta": args.beta,
             "tol": args.tol, "max_iters": args.max_iters, "precision": args.precision,
             "boundary": args.boundary}
    kw.update({k: v for k, v in flags.items() if v is not None})
    if kw["experiment"] in ("projection_static", "cycle_compare") and args.grid is None:
        kw["grids"] = ("sphere", "star")
    if args.config is not None:
        over = json.loads(args.config.read_text())
        over.pop("experiment", None)
        for key in ("grids", "l0s"):
            if key in over:
                over[key] = tuple(over[key])
        kw.update(over)
    return ExperimentConfig(**kw)


def set_workers() -> None:
    n = os.environ.get(WORKERS_ENV)
    if n:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def failed_solves(experiment: str, reports: dict) -> list[str]:
    bad = []
    for key, rep in reports.items():
        if experiment == "cycle_compare" and key.endswith("gmg_mu1"):
            continue  # the geometric variant is expected to stall
        if not rep.get("converged", False):
            bad.append(key)
    return bad


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = make_config(args)
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    set_workers()
    log.info("running %s", config_dict(cfg))
    result = run(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    csv_path = args.out / f"{cfg.experiment}.csv"
    csv_path.write_text(result.to_csv())
    if result.reports:
        payload = {"config": config_dict(cfg), "reports": result.reports}
        (args.out / f"{cfg.experiment}_reports.json").write_text(json.dumps(payload, indent=1))
    print(csv_path)
    bad = failed_solves(cfg.experiment, result.reports)
    if bad:
        print(f"solver did not converge: {', '.join(bad)}", file=sys.stderr)
        return 1
    return 0
