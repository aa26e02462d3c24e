"""``aneuflow`` command line entry point."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from ..caselib import validate_layout, verify_manifest
from ..flowsolve import ConfigError
from . import pipeline
from .config import PRESETS, GridConfig, SweepConfig, load_pipeline_config
from .pipeline import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL

STAGES = ("gen", "sim", "analyze", "train", "eval", "sweep", "verify")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aneuflow", description="Synthetic aneurysm flow corpus and surrogate pipeline.")
    ap.add_argument("--root", help="corpus root (overrides ANEUFLOW_ROOT and the config)")
    ap.add_argument("--config", help="TOML pipeline config")
    ap.add_argument("--seed", type=int, help="master seed (also seeds model, training and splits)")
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes (default: logical cores)")
    ap.add_argument("--preset", choices=PRESETS, help="solver preset")
    ap.add_argument("--spacing", type=float, help="voxel spacing in mm (overrides grid.spacing)")
    sub = ap.add_subparsers(dest="stage", required=True)
    for name in STAGES:
        sp = sub.add_parser(name)
        if name == "sweep":
            sp.add_argument("--kind", help="sweep kind (overrides sweep.kind)")
            sp.add_argument("--grid", help="comma-separated grid values (overrides sweep.grid)")
    return ap


def _parse_grid(text: str) -> tuple:
    try:
        return tuple(float(v) if "." in v or "e" in v.lower() else int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"--grid: {exc}") from exc


def run(argv=None, log=print) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
        cfg = load_pipeline_config(args.config, args.preset, args.seed)
        if args.spacing is not None:
            cfg.grid = GridConfig(args.spacing)
        if args.stage == "sweep" and (args.kind or args.grid):
            cfg.sweep = SweepConfig(args.kind or cfg.sweep.kind, _parse_grid(args.grid) if args.grid else cfg.sweep.grid)
        root = cfg.resolve_root(args.root)
        if args.stage == "verify":
            return _verify(root, log)
        if args.stage in ("sim", "analyze", "train", "eval", "sweep") and not root.is_dir():
            raise ConfigError(f"corpus root {root} does not exist; run gen first")
        stage = {
            "gen": lambda: pipeline.gen(cfg, root, args.jobs, log),
            "sim": lambda: pipeline.sim(cfg, root, args.jobs, log),
            "analyze": lambda: pipeline.analyze(cfg, root, log),
            "train": lambda: pipeline.train_stage(cfg, root, log),
            "eval": lambda: pipeline.eval_stage(cfg, root, log=log),
            "sweep": lambda: pipeline.sweep_stage(cfg, root, args.jobs, log),
        }[args.stage]
        res = stage()
    except ConfigError as exc:
        log(f"config error: {exc}")
        return EXIT_CONFIG
    log(res.line())
    for who, msg in res.failed:
        log(f"  failed {who}: {msg}")
    return res.exit_code


def _verify(root, log) -> int:
    rep = verify_manifest(root)
    probs = [f"{p}: {k}" for p, k in sorted(rep.problems().items())] + validate_layout(root)
    for p in probs:
        log(p)
    log(f"verify: {'ok' if not probs else f'{len(probs)} problem(s)'}")
    return EXIT_OK if not probs else EXIT_PARTIAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
