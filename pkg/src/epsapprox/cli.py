"""Command line runner: epsapprox <subcommand> --config run.json [...]."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig


def _parser():
    p = argparse.ArgumentParser(
        prog="epsapprox",
        description="Build, decompose, approximate and certify an "
        "epsilon-approximant run.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration JSON")
    common.add_argument("--cache-dir", default=None, help="stage cache directory")
    common.add_argument("--seed", type=int, default=None, help="override seed")
    common.add_argument("--jobs", type=int, default=None, help="verification jobs")
    common.add_argument("--out", default=None, help="override output directory")
    for name, help_ in [
        ("run", "full pipeline: build, decompose, approximate, verify, report"),
        ("build-grid", "boundary, cube system, ADR certification"),
        ("decompose", "Whitney complex, corona, regions (needs build-grid)"),
        ("approximate", "stopping families and approximants (needs decompose)"),
        ("verify", "certification sweeps; writes the report bundle"),
        ("report", "re-emit tables from a verified run"),
    ]:
        sp = sub.add_parser(name, parents=[common], help=help_)
        if name == "report":
            sp.add_argument(
                "--format", choices=("json", "csv"), default="json",
                help="print the acceptance summary as json or csv",
            )
    return p


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    cache = args.cache_dir
    try:
        cfg = _load_config(args)
        if args.command == "run":
            report, summary = pipeline.run(cfg, cache_dir=cache)
        elif args.command == "build-grid":
            if not cache:
                raise RuntimeError("build-grid requires --cache-dir")
            grid = pipeline.stage_grid(cfg)
            pipeline.save_stage(cache, cfg, "grid", grid)
            print(f"grid: {grid['S'].to_json()['cubes'].__len__()} cubes, "
                  f"ADR pass={grid['adr'].passed}")
            return 0
        elif args.command == "decompose":
            if not cache:
                raise RuntimeError("decompose requires --cache-dir")
            grid = pipeline.load_stage(cache, cfg, "grid")
            regions = pipeline.stage_regions(cfg, grid)
            pipeline.save_stage(cache, cfg, "regions", regions)
            print(f"regions: {regions['W'].n_boxes} boxes, "
                  f"{len(regions['RC'].corona.regimes)} regimes")
            return 0
        elif args.command == "approximate":
            if not cache:
                raise RuntimeError("approximate requires --cache-dir")
            grid = pipeline.load_stage(cache, cfg, "grid")
            regions = pipeline.load_stage(cache, cfg, "regions")
            approx = pipeline.stage_approximate(cfg, grid, regions)
            pipeline.save_stage(cache, cfg, "approximate", approx)
            n = sum(len(v["A"].cells) for v in approx["per_eps"].values())
            print(f"approximants: {n} cells over eps grid {cfg.eps_grid}")
            return 0
        elif args.command == "verify":
            if cache:
                grid = pipeline.load_stage(cache, cfg, "grid")
                regions = pipeline.load_stage(cache, cfg, "regions")
                try:
                    approx = pipeline.load_stage(cache, cfg, "approximate")
                except RuntimeError:
                    approx = pipeline.stage_approximate(cfg, grid, regions)
            else:
                grid = pipeline.stage_grid(cfg)
                regions = pipeline.stage_regions(cfg, grid)
                approx = pipeline.stage_approximate(cfg, grid, regions)
            report = pipeline.stage_verify(cfg, grid, regions, approx)
            summary = pipeline.write_outputs(
                cfg, grid, regions, approx, report, cfg.out_dir
            )
        elif args.command == "report":
            out = Path(cfg.out_dir)
            summary = json.loads((out / "acceptance.json").read_text())
            if args.format == "json":
                print(json.dumps(summary, indent=1, sort_keys=True))
            else:
                print("check,pass")
                for name, ok in summary["hard_checks"]:
                    print(f"{name},{int(ok)}")
            return 0 if summary["pass"] else 1
        else:  # pragma: no cover
            raise RuntimeError(args.command)
    except (RuntimeError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name, ok in summary["hard_checks"]:
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"overall: {'PASS' if summary['pass'] else 'FAIL'}")
    return 0 if summary["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
