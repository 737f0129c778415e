"""Command-line entry point.

    figsim run    --mode figcache-fast --synthetic hot=64,frac=0.9 --out r.csv
    figsim sweep  --axis threshold --values 1,2,4,8 --repetitions 3 --out s.csv
    figsim compare --modes base,figcache-fast,figcache-ideal
    figsim fts-report
    figsim gen-trace --synthetic n=1000 --out t.txt

Exit codes: 0 success, 2 config error, 3 trace error, 4 simulation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

from .config import DramConfig, load_config, parse_mode, parse_replacement
from .errors import (
    AlignmentError,
    FigsimError,
    IllegalCommand,
    OrderingError,
    OutOfRange,
    ParseError,
    ValidationError,
)
from .figcache import fts_accounting
from .sim import simulate
from .stats import RunReport, emit, error_report, report_from_result
from .workload import Trace, generate_synthetic, load_trace, parse_synthetic, write_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRACE = 3
EXIT_SIM = 4

AXES = ("segment-blocks", "cache-rows", "fast-subarrays", "policy", "threshold", "mode")


class StageError(Exception):
    """A module error tagged with the stage that raised it and the exit code to use."""

    def __init__(self, stage: str, error: Exception, code: int):
        self.stage = stage
        self.error = error
        self.code = code
        super().__init__(f"{stage}.{type(error).__name__}: {error}")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _overrides(args, **extra) -> dict:
    ov = {}
    for key, value in getattr(args, "set", None) or ():
        ov[key] = value
    if args.mode is not None:
        ov["mode"] = args.mode
    if args.segment_blocks is not None:
        ov["blocks_per_segment"] = args.segment_blocks
    if args.cache_rows is not None:
        ov["cache_rows_per_bank"] = args.cache_rows
    if args.policy is not None:
        ov["replacement"] = args.policy
    if args.threshold is not None:
        ov["insertion_threshold"] = args.threshold
    ov.update(extra)
    return ov


def build_config(config_path: Optional[str], overrides: dict) -> DramConfig:
    try:
        return load_config(config_path, overrides)
    except (ParseError, ValidationError, OSError, ValueError) as exc:
        raise StageError("config", exc, EXIT_CONFIG) from exc


def build_trace(args, config: DramConfig, seed: int) -> Trace:
    g = config.geometry
    try:
        if args.trace:
            return load_trace(args.trace, g)
        spec = parse_synthetic(args.synthetic or "")
        return generate_synthetic(dataclasses.replace(spec, seed=seed), g)
    except (ParseError, OrderingError, AlignmentError, OutOfRange, OSError) as exc:
        raise StageError("workload", exc, EXIT_TRACE) from exc
    except ValidationError as exc:
        raise StageError("workload", exc, EXIT_CONFIG) from exc


def run_point(config: DramConfig, trace: Trace, seed: int) -> RunReport:
    try:
        result = simulate(config, trace)
    except IllegalCommand as exc:
        raise StageError("dram", exc, EXIT_SIM) from exc
    except (OrderingError, AlignmentError, OutOfRange) as exc:
        raise StageError("workload", exc, EXIT_TRACE) from exc
    except FigsimError as exc:
        raise StageError("controller", exc, EXIT_SIM) from exc
    return report_from_result(result, seed=seed)


def _seed_of(args, rep: int) -> int:
    return args.seed + rep


def _with_policy_seed(overrides: dict, seed: int) -> dict:
    out = dict(overrides)
    out.setdefault("random_seed", seed)
    return out


def _write(reports, args) -> None:
    text = emit(reports, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    seed = _seed_of(args, 0)
    config = build_config(args.config, _with_policy_seed(_overrides(args), seed))
    trace = build_trace(args, config, seed)
    report = run_point(config, trace, seed)
    _write([report], args)
    return EXIT_OK


def _axis_override(axis: str, value: str) -> dict:
    try:
        if axis == "segment-blocks":
            return {"blocks_per_segment": int(value)}
        if axis == "cache-rows":
            return {"cache_rows_per_bank": int(value)}
        if axis == "fast-subarrays":
            return {"fast_subarrays": int(value), "cache_rows_per_bank": None}
        if axis == "policy":
            return {"replacement": parse_replacement(value)}
        if axis == "threshold":
            return {"insertion_threshold": int(value)}
        if axis == "mode":
            return {"mode": parse_mode(value)}
    except (ValueError, ParseError) as exc:
        raise StageError("cli", ValidationError(axis, str(exc)), EXIT_CONFIG) from exc
    raise StageError("cli", ValidationError("axis", f"unknown axis {axis!r}"), EXIT_CONFIG)


def _fast_subarray_rows(config_path, overrides, count: int) -> dict:
    base = build_config(config_path, {k: v for k, v in overrides.items() if k not in ("fast_subarrays", "cache_rows_per_bank")})
    return {"fast_subarrays": count, "cache_rows_per_bank": count * base.policy.fast_subarray_rows}


def _sweep_point(task) -> RunReport:
    """One (value, repetition) point; errors become a report with the error column set."""
    args, axis, value, rep = task
    seed = _seed_of(args, rep)
    overrides = _with_policy_seed(_overrides(args), seed)
    try:
        extra = _axis_override(axis, value)
        if axis == "fast-subarrays":
            extra = _fast_subarray_rows(args.config, overrides, int(value))
        overrides.update(extra)
        config = build_config(args.config, overrides)
    except StageError as exc:
        try:
            fallback = build_config(args.config, _with_policy_seed(_overrides(args), seed))
        except StageError:
            fallback = DramConfig()
        return error_report(fallback, seed, str(exc))
    try:
        trace = build_trace(args, config, seed)
        return run_point(config, trace, seed)
    except StageError as exc:
        return error_report(config, seed, str(exc))


def _run_tasks(tasks, jobs: int) -> list[RunReport]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_sweep_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_point, tasks))


def cmd_sweep(args) -> int:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise StageError("cli", ValidationError("values", "must not be empty"), EXIT_CONFIG)
    if args.repetitions < 1:
        raise StageError("cli", ValidationError("repetitions", "must be >= 1"), EXIT_CONFIG)
    # surface a broken base config before running anything
    build_config(args.config, _overrides(args))
    tasks = [(args, args.axis, v, rep) for v in values for rep in range(args.repetitions)]
    _write(_run_tasks(tasks, args.jobs), args)
    return EXIT_OK


def cmd_compare(args) -> int:
    args.axis = "mode"
    args.values = args.modes
    args.mode = None
    return cmd_sweep(args)


def cmd_fts_report(args) -> int:
    config = build_config(args.config, _overrides(args))
    acct = fts_accounting(config, args.tag_bits)
    sys.stdout.write("\n".join(acct.lines()) + "\n")
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    config = build_config(args.config, {})
    trace = build_trace(args, config, args.seed)
    if args.out:
        write_trace(trace, args.out)
    else:
        from .workload import format_records

        sys.stdout.write(format_records(trace))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _key_value(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def _common(p: argparse.ArgumentParser, workload: bool = True) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", type=_key_value, metavar="KEY=VALUE", help="override any config key")
    p.add_argument("--mode", help="base, figcache-fast, figcache-slow, lisa-villa, figcache-ideal, ll-dram")
    p.add_argument("--segment-blocks", type=int, help="blocks per cached segment")
    p.add_argument("--cache-rows", type=int, help="cache rows per bank")
    p.add_argument("--policy", help="row-benefit, segment-benefit, lru, random")
    p.add_argument("--threshold", type=int, help="misses before a segment is cached")
    p.add_argument("--seed", type=int, default=0, help="trace and policy seed (repetition r uses seed + r)")
    if workload:
        src = p.add_mutually_exclusive_group()
        src.add_argument("--trace", help="trace file")
        src.add_argument("--synthetic", help="synthetic spec, e.g. hot=64,frac=0.9,n=1000000")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="figsim", description="Trace-driven DRAM simulator with an in-DRAM segment cache.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one configuration")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run one axis of values times repetitions")
    _common(p)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="run several modes on the same workload")
    _common(p)
    p.add_argument("--modes", default="base,figcache-fast,figcache-slow,figcache-ideal,lisa-villa,ll-dram")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fts-report", help="tag store storage accounting")
    _common(p, workload=False)
    p.add_argument("--tag-bits", type=int, help="override the computed tag width")
    p.set_defaults(func=cmd_fts_report)

    p = sub.add_parser("gen-trace", help="write a synthetic trace file")
    p.add_argument("--config")
    p.add_argument("--synthetic", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_trace, trace=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: io.{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
