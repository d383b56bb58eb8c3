#!/usr/bin/env python3
"""
ovcollapse command line.

    python main.py run configs/region1.json --out out/region1 --jobs 4
    python main.py emit out/region1/bundle.json --format svg
    python main.py list-experiments

Exit status is 0 iff every verdict passes.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import harness
from errors import ConfigError, OVCError
from models import ReportBundle
from report import emit, load_bundle, parse_formats
from settings import APP_NAME, APP_VERSION, DEFAULT_FORMATS, JOBS, LOG_LEVEL, OUTPUT_DIR

logger = logging.getLogger(APP_NAME)


def print_summary(bundle: ReportBundle, written: List[Path]) -> None:
    print(f"{bundle.experiment.value}  (config {bundle.provenance.config_hash[:12]}, seed {bundle.provenance.seed})")
    for v in bundle.verdicts:
        mark = "✓" if v.passed else "✗"
        observed = "-" if v.observed is None else f"{v.observed:.6g}"
        threshold = "-" if v.threshold is None else f"{v.threshold:.6g}"
        line = f"  {mark} {v.name}: {v.label} (observed {observed}, threshold {threshold})"
        if v.detail and not v.passed:
            line += f"  {v.detail}"
        print(line)
    for path in written:
        print(f"  wrote {path}")


def cmd_run(args) -> int:
    formats = parse_formats(args.format)
    config = harness.load_config(args.config)
    if args.seed is not None:
        config = config.model_copy(update={"seed": args.seed})
    out_dir = args.out or config.output_dir or str(Path(OUTPUT_DIR) / config.experiment.value.lower())

    bundle = harness.run(config, jobs=args.jobs)
    written = emit(bundle, out_dir, formats)
    print_summary(bundle, written)
    return 0 if bundle.passed else 1


def cmd_emit(args) -> int:
    bundle = load_bundle(args.bundle)
    out_dir = args.out or str(Path(args.bundle).parent)
    written = emit(bundle, out_dir, parse_formats(args.format))
    print_summary(bundle, written)
    return 0 if bundle.passed else 1


def cmd_list(args) -> int:
    for route in harness.list_experiments():
        print(f"{route.name.value:<18} [{route.family}] {route.description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=APP_NAME, description="Collapsing Gibbons-Hawking metrics near a nut.")
    parser.add_argument("--version", action="version", version=f"{APP_NAME} {APP_VERSION}")
    parser.add_argument("--log-level", default=LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config", help="path to an experiment config (JSON)")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--jobs", type=int, default=JOBS, help="worker threads for per-eps rows")
    run.add_argument("--format", default=DEFAULT_FORMATS, help="comma list of csv,json,svg")
    run.set_defaults(func=cmd_run)

    em = sub.add_parser("emit", help="re-render artifacts from a saved bundle.json")
    em.add_argument("bundle", help="path to bundle.json")
    em.add_argument("--out", default=None, help="output directory (defaults to the bundle's)")
    em.add_argument("--format", default=DEFAULT_FORMATS, help="comma list of csv,json,svg")
    em.set_defaults(func=cmd_emit)

    ls = sub.add_parser("list-experiments", help="list registered experiments")
    ls.set_defaults(func=cmd_list)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("%s", exc)
        print(f"✗ {exc}", file=sys.stderr)
        return 2
    except OVCError as exc:
        logger.error("experiment aborted: %s", exc)
        print(f"✗ {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
