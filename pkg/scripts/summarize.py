"""Print the headline metrics of the CSV files written by the experiments."""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

HEADLINE = {
    "galerkin_check": ["max_rel_error"],
    "laplacian": ["rms_error", "rms_error_rate", "leaf_cells"],
    "poisson_sin": ["solution_rms_error", "solution_rms_error_rate", "iterations",
                    "reduction_factor", "fitted_reduction_factor", "plateau_iteration"],
    "projection_static": ["divergence_rms", "divergence_rms_rate", "iterations",
                          "reduction_factor", "fitted_reduction_factor", "plateau_iteration"],
    "cycle_compare": ["mu2_iterations", "mu1_iterations", "gmg_mu1_iterations",
                      "gmg_mu1_iterations_run", "gmg_mu1_final_relres"],
}


def load(path: Path):
    table = defaultdict(dict)
    with path.open() as fh:
        for row in csv.DictReader(fh):
            table[(row["grid"], int(row["l0"]))][row["metric"]] = float(row["value"])
    return table


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("results", type=Path, nargs="?", default=Path("results"))
    args = ap.parse_args(argv)
    for exp, metrics in HEADLINE.items():
        path = args.results / f"{exp}.csv"
        if not path.exists():
            continue
        print(f"\n== {exp}")
        print("grid      l0  " + "  ".join(f"{m:>24}" for m in metrics))
        for (grid, l0), vals in sorted(load(path).items()):
            if not any(m in vals for m in metrics):
                continue
            cells = [f"{vals[m]:24.6g}" if m in vals else " " * 24 for m in metrics]
            print(f"{grid:8s} {l0:3d}  " + "  ".join(cells))


if __name__ == "__main__":
    main()
