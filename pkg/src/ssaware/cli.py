"""Command line entry point: ``ssaware run|report|validate|fuzz-wire``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .scenario import ConfigError, load_scenario
from .sim import ContainmentViolation

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_VIOLATION = 4

DEFAULT_SCENARIO = "occluded_pedestrian"


def _common(p: argparse.ArgumentParser, out_default=None):
    p.add_argument("--scenario", default=DEFAULT_SCENARIO, help="bundled scenario name or YAML path")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", type=Path, default=out_default, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssaware", description="Set-based cooperative situational awareness simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write artifacts")
    _common(p, Path("out"))
    p.add_argument("--self-check", action="store_true", help="exit 4 if any true state leaves its set")
    p.add_argument("--report", action="store_true", help="also write report.txt and outlines.csv")

    p = sub.add_parser("report", help="summarise a finished run directory")
    _common(p, Path("out"))
    p.add_argument("--at", type=float, default=None, help="scene time in seconds (default: last scene)")
    p.add_argument("--no-outlines", action="store_true", help="skip outlines.csv")

    p = sub.add_parser("validate", help="check a scenario file and print the normalised config")
    _common(p)

    p = sub.add_parser("fuzz-wire", help="round-trip and fuzz the wire decoder")
    _common(p)
    p.add_argument("--iterations", type=int, default=10000)
    return parser


def _config(args):
    cfg = load_scenario(args.scenario)
    return cfg if args.seed is None else cfg.with_seed(args.seed)


def _run(args) -> int:
    from .report import report
    from .sim import run

    cfg = _config(args)
    start = time.perf_counter()
    try:
        res = run(cfg, out_dir=args.out, self_check=args.self_check)
    except ContainmentViolation as exc:
        print(f"containment violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    c = res.containment
    print(
        f"{cfg.name} seed={cfg.seed} ticks={len(res.timeline)} "
        f"sent={res.messages_sent} dropped={res.messages_dropped} "
        f"corrected={c.corrected_checked}/{c.corrected_violations} fused={c.fused_checked}/{c.fused_violations} "
        f"elapsed={time.perf_counter() - start:.2f}s out={args.out}"
    )
    if args.report:
        report(args.out)
    return EXIT_OK


def _report(args) -> int:
    from .report import report

    if not (args.out / "scenes.ndjson").exists():
        raise ConfigError(f"{args.out} does not contain a finished run")
    print(report(args.out, at=args.at, outlines=not args.no_outlines))
    return EXIT_OK


def _validate(args) -> int:
    from .scenario import dump_scenario

    cfg = _config(args)
    text = dump_scenario(cfg)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "config.yaml").write_text(text)
    print(text, end="")
    return EXIT_OK


def _fuzz(args) -> int:
    from .wirefuzz import fuzz

    if args.iterations < 0:
        raise ConfigError("--iterations must be nonnegative")
    stats = fuzz(args.iterations, seed=0 if args.seed is None else args.seed)
    text = json.dumps(stats, indent=2, sort_keys=True)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "fuzz.json").write_text(text + "\n")
    print(text)
    return EXIT_OK if stats["roundtrip_mismatches"] == 0 else EXIT_RUNTIME


VERBS = {"run": _run, "report": _report, "validate": _validate, "fuzz-wire": _fuzz}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return VERBS[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
