"""Command-line entry point.

Verbs: ``run``, ``grid``, ``capacity``, ``scale``, plus ``config`` (print the
effective configuration) and ``schema`` (print the JSON Schema).
Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import traceback
from pathlib import Path

from . import __version__
from .config import SCHEMA, ConfigError, ScenarioConfig, dump_effective, load_preset, parse_scenario
from .experiments import (
    default_scale_values, run_capacity_sweep, run_policy_grid, run_scalability, run_single,
    with_policy, write_csv,
)
from .orchestration import OFFLOADINGS, PLACEMENTS, Deployment, parse_offloading, parse_placement
from .workload import DEFAULT_CPU_CLASSES_MIPS, PRESET_NAMES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _number_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _add_common(p: argparse.ArgumentParser, multi_policy: bool = False) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", metavar="PATH", help="scenario YAML file")
    src.add_argument("--preset", choices=PRESET_NAMES, help="built-in scenario preset")
    p.add_argument("--seed", type=_u64, help="base seed (replications use seed, seed+1, ...)")
    p.add_argument("--reps", type=int, help="replications per configuration")
    p.add_argument("--duration-min", type=float, help="simulated minutes per run")
    p.add_argument("--out", metavar="CSV", help="output CSV path (default: stdout)")
    p.add_argument("--effective-config", metavar="YAML",
                   help="where to echo the effective config (default: next to --out)")
    p.add_argument("--perf", action="store_true", help="add wall_clock_s and peak_memory_mb columns")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    if multi_policy:
        p.add_argument("--deployment", action="append", choices=[d.value for d in Deployment],
                       help="restrict to a deployment model (repeatable)")
        p.add_argument("--placement", action="append", metavar="NAME:VARIANT",
                       help="restrict to a placement policy (repeatable)")
        p.add_argument("--offloading", action="append", metavar="NAME:MODE",
                       help="restrict to an offloading policy (repeatable)")
    else:
        p.add_argument("--deployment", choices=[d.value for d in Deployment])
        p.add_argument("--placement", metavar="NAME:VARIANT", help=f"one of {', '.join(PLACEMENTS)}")
        p.add_argument("--offloading", metavar="NAME:MODE", help=f"one of {', '.join(OFFLOADINGS)}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ponsim", description="PON edge-computing discrete-event simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("run", help="replicated runs of one configuration plus a mean row")
    _add_common(p)

    p = sub.add_parser("grid", help="placement x offloading x deployment policy grid")
    _add_common(p, multi_policy=True)

    p = sub.add_parser("capacity", help="sweep per-core MIPS of the edge VMs")
    _add_common(p, multi_policy=True)
    p.add_argument("--mips", type=_number_list, default=list(DEFAULT_CPU_CLASSES_MIPS),
                   help="comma-separated per-core MIPS values")

    p = sub.add_parser("scale", help="wall-clock and memory versus OLT or user count")
    _add_common(p)
    p.add_argument("--axis", choices=("olts", "users"), required=True)
    p.add_argument("--values", type=_int_list, help="comma-separated axis values")
    p.add_argument("--olts", type=int, default=100, help="OLT count held fixed on the users axis")
    p.add_argument("--users", type=int, default=1000, help="user count held fixed on the olts axis")
    p.add_argument("--no-isolate", action="store_true", help="run in-process instead of one process per run")

    p = sub.add_parser("config", help="print the effective configuration as YAML")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", metavar="PATH")
    src.add_argument("--preset", choices=PRESET_NAMES)

    sub.add_parser("schema", help="print the scenario JSON Schema")
    return parser


def _load(args) -> ScenarioConfig:
    if getattr(args, "scenario", None):
        return parse_scenario(args.scenario)
    return load_preset(getattr(args, "preset", None) or "mixed")


def _check_policies(values, parse) -> None:
    for v in values or ():
        try:
            parse(v)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _apply_overrides(cfg: ScenarioConfig, args, default_minutes: float | None = None) -> ScenarioConfig:
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.reps is not None:
        if args.reps < 1:
            raise ConfigError("--reps must be at least 1")
        cfg = dataclasses.replace(cfg, replication_count=args.reps)
    minutes = args.duration_min if args.duration_min is not None else default_minutes
    if minutes is not None:
        if minutes <= 0:
            raise ConfigError("--duration-min must be positive")
        cfg = dataclasses.replace(cfg, duration_s=minutes * 60.0)
    if isinstance(args.placement, list):
        _check_policies(args.placement, parse_placement)
        _check_policies(args.offloading, parse_offloading)
    else:
        _check_policies([args.placement] if args.placement else [], parse_placement)
        _check_policies([args.offloading] if args.offloading else [], parse_offloading)
        cfg = with_policy(cfg, args.placement, args.offloading, args.deployment)
    return cfg


def _echo_config(cfg: ScenarioConfig, args) -> None:
    target = args.effective_config
    if target is None and args.out:
        out = Path(args.out)
        target = out.with_name(out.stem + ".effective.yaml")
    if target:
        Path(target).write_text(dump_effective(cfg))


def _emit(rows, args, perf: bool) -> None:
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            write_csv(rows, fh, perf)
    else:
        write_csv(rows, sys.stdout, perf)


def _dispatch(args) -> int:
    if args.verb == "schema":
        print(json.dumps(SCHEMA, indent=2))
        return EXIT_OK
    if args.verb == "config":
        sys.stdout.write(dump_effective(_load(args)))
        return EXIT_OK

    cfg = _apply_overrides(_load(args), args, default_minutes=1.0 if args.verb == "scale" else None)
    _echo_config(cfg, args)
    perf = args.perf
    if args.verb == "run":
        rows = run_single(cfg, workers=args.jobs)
    elif args.verb == "grid":
        rows = run_policy_grid(cfg, args.placement, args.offloading, args.deployment, workers=args.jobs)
    elif args.verb == "capacity":
        rows = run_capacity_sweep(cfg, args.mips, args.deployment, workers=args.jobs)
    else:
        values = args.values or default_scale_values(args.axis)
        rows = run_scalability(cfg, args.axis, values, olts=args.olts, users=args.users,
                               isolate=not args.no_isolate)
        perf = True
    _emit(rows, args, perf)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure inside a run maps to one exit code
        traceback.print_exc()
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
