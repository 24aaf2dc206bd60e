"""Leaf-cell counts per level for the experiment grids.

Shows why the sphere and star series flatten between l0 = 1 and l0 = 2:
at l0 = 1 every level-1 tile crosses the surface, so both grids share the
same coarsest leaf level.
"""

import argparse

import numpy as np

from octree_mg.experiments import GRIDS, make_grid


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--l0", default="1,2,3")
    args = ap.parse_args(argv)
    for grid in GRIDS:
        for l0 in (int(v) for v in args.l0.split(",")):
            lay = make_grid(grid, l0).layout
            levels, counts = np.unique(lay.level[lay.leaf_index()], return_counts=True)
            desc = ", ".join(f"L{lv} (h=1/{8 << int(lv)}): {n}" for lv, n in zip(levels, counts))
            print(f"{grid:8s} l0={l0}  total {counts.sum():>9d}  {desc}")


if __name__ == "__main__":
    main()
