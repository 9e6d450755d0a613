#!/usr/bin/env python3
"""Chart the packing constants of the large-oscillation and generation
families over an eps grid (CSV to stdout), for one config."""

import sys

from epsapprox.config import RunConfig
from epsapprox.functionals import FunctionalSuite
from epsapprox.harmonic import make_field
from epsapprox.pipeline import stage_grid, stage_regions
from epsapprox.stopping import generation_cubes, oscillation_cubes, verify_eps_packing

EPS = (0.05, 0.1, 0.2, 0.4, 0.8)


def main(path):
    cfg = RunConfig.load(path)
    grid = stage_grid(cfg)
    regions = stage_regions(cfg, grid)
    RC = regions["RC"]
    u = make_field(cfg.field_desc, grid["E"])
    FS = FunctionalSuite(RC, u, sample_frac=cfg.sample_frac)
    numbers, _ = FS.cube_numbers(None)
    print("eps,Lambda_R_union_B,Lambda_Gstar")
    for eps in EPS:
        labels = oscillation_cubes(FS, eps, numbers)
        gf = generation_cubes(RC, eps, numbers, u)
        rub = verify_eps_packing(grid["S"], labels.cubes | RC.corona.bad, eps)
        rg = verify_eps_packing(grid["S"], gf.all_cubes, eps)
        print(f"{eps},{rub['Lambda']!r},{rg['Lambda']!r}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "configs/quick_t.json")
