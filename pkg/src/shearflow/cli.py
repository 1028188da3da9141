"""Command-line entry point: ``shearflow <mode> --config <path> [--out <dir>] [--seed <int>]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import MODES, RunConfig
from .errors import ConfigError, StudyFailure
from .studies import COMMANDS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shearflow",
        description="Steady compressible flow near a planar shear flow in the unit square.",
    )
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, help="seed for random-field studies (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if cfg.mode is not None and cfg.mode != args.mode:
            raise ConfigError(f"config is for mode {cfg.mode!r}, not {args.mode!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return exc.exit_code
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.output)
    try:
        result = COMMANDS[args.mode](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return exc.exit_code
    except StudyFailure as exc:
        print(f"{args.mode} failed: {exc}", file=sys.stderr)
        return exc.exit_code
    if args.mode == "solve":
        status = result["status"]
        print(f"{status}: steps={len(result['iterations'])} D0={result['D0']:.6g}")
        if result["exit_code"]:
            print(result.get("error", status), file=sys.stderr)
        return result["exit_code"]
    print(f"{args.mode}: passed, output in {out}")
    return 0
