#!/usr/bin/env python3
"""
Command-line entry point.

    python main.py run configs/scenarios/npost_wrong_values.yaml --seeds 0-9
    python main.py check trace.jsonl
    python main.py bench --mask 0,VPRE,NPRE,VPOST,NPOST --clients 1,8 --out bench-results
    python main.py suite

Exit status is 0 when every checked run is safe, 1 when a safety violation
was found and 2 on usage or configuration errors.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError

from bench.runner import run_bench, write_results
from core.errors import ConfigurationError, TraceError, UsageError
from models.payload import parse_mask
from models.report import BenchConfig, RunResult
from simnet.safety import check_safety
from simnet.scenarios import list_scenarios, load_protocol_defaults, load_scenario
from simnet.simulator import simulate_sweep
from utils import get_logger, get_settings, setup_logging

EXIT_OK = 0
EXIT_UNSAFE = 1
EXIT_USAGE = 2

logger = get_logger(__name__)


def _int_list(text: str) -> List[int]:
    """Parse ``1,2,8`` or ``0-9`` (inclusive) into a list of ints."""
    values: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                values.extend(range(int(lo), int(hi) + 1))
            else:
                values.append(int(part))
        except ValueError:
            raise UsageError(f"not an integer list: {text!r}") from None
    if not values:
        raise UsageError(f"empty list: {text!r}")
    return values


def _mask_list(text: str) -> List[int]:
    masks: List[int] = []
    for part in text.split(","):
        try:
            mask = parse_mask(part)
        except ValueError as e:
            raise UsageError(str(e)) from None
        if mask not in masks:
            masks.append(mask)
    return masks


def _opt_list(text: str) -> List[bool]:
    choices = {"on": [True], "off": [False], "both": [False, True]}
    if text not in choices:
        raise UsageError(f"--opt must be one of on, off, both (got {text!r})")
    return choices[text]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ndbft",
        description="BFT replication with nondeterminism control, run in a deterministic simulated network.",
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default from NDBFT_LOG_LEVEL)")
    parser.add_argument("--json-logs", action="store_true", help="emit log lines as JSON")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario file for one or more seeds")
    p_run.add_argument("scenario", type=Path, help="scenario YAML file")
    seeds = p_run.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, default=None, help="single seed (default 0)")
    seeds.add_argument("--seeds", default=None, help="seed list, e.g. 0,1,2 or 0-99")
    p_run.add_argument("--trace-out", type=Path, default=None, help="write the trace of the first seed here")
    p_run.add_argument("--metrics-out", type=Path, default=None, help="write Prometheus metrics of the first seed here")

    p_check = sub.add_parser("check", help="check a recorded trace for safety violations")
    p_check.add_argument("trace", type=Path, help="line-delimited JSON trace")

    p_suite = sub.add_parser("suite", help="run every scenario of a directory")
    p_suite.add_argument("--dir", type=Path, default=None, help="scenario directory (default configs/scenarios)")
    p_suite.add_argument("--seeds", default="0", help="seed list, e.g. 0-9")

    p_bench = sub.add_parser("bench", help="latency/throughput sweep in virtual time")
    p_bench.add_argument("--mask", default="0,VPRE,NPRE,VPOST,NPOST",
                         help="comma-separated masks, each 0 or classes joined by '|' (e.g. NPRE|NPOST)")
    p_bench.add_argument("--nd-size", default="256", help="nondeterministic value size per class in bytes, list allowed")
    p_bench.add_argument("--req-size", type=int, default=1024, help="request size in bytes (default 1024)")
    p_bench.add_argument("--reply-size", type=int, default=None, help="reply size in bytes (default: --req-size)")
    p_bench.add_argument("--clients", default="1", help="closed-loop client counts, list allowed")
    p_bench.add_argument("--iters", type=int, default=1000, help="requests per client (default 1000)")
    p_bench.add_argument("--f", type=int, default=1, help="tolerated faults; n = 3f+1 (default 1)")
    p_bench.add_argument("--opt", default="on", help="optimizations: on, off or both (default on)")
    p_bench.add_argument("--seed", type=int, default=0, help="simulation seed (default 0)")
    p_bench.add_argument("--jitter-us", type=int, default=10, help="per-link delay jitter in us, 0 for fixed links (default 10)")
    p_bench.add_argument("--out", type=Path, default=None, help="output directory for results.csv and summary.json")
    return parser


def bench_config(args: argparse.Namespace) -> BenchConfig:
    """
    Turn bench flags into a validated BenchConfig.

    Raises:
        UsageError: On malformed or conflicting flags
    """
    try:
        return BenchConfig(
            masks=_mask_list(args.mask),
            nd_sizes=_int_list(args.nd_size),
            req_size=args.req_size,
            reply_size=args.reply_size if args.reply_size is not None else args.req_size,
            clients=_int_list(args.clients),
            iters=args.iters,
            f=args.f,
            optimizations=_opt_list(args.opt),
            seed=args.seed,
            jitter_us=args.jitter_us,
        )
    except ValidationError as e:
        raise UsageError(f"invalid bench flags: {e}") from e


def _summarize(result: RunResult) -> str:
    m = result.metrics
    verdict = "SAFE" if result.report.ok else f"UNSAFE ({len(result.report.violations)} violations)"
    return (
        f"{result.scenario} seed={result.seed}: {verdict}; completed={m.completed} failed={m.failed} "
        f"suspicions={len(result.report.suspicions)} restarts={len(result.report.restarts)} "
        f"mean_latency_us={m.mean_latency_us:.0f}"
    )


def _run_scenarios(
    paths: Sequence[Path],
    seeds: Sequence[int],
    trace_out: Optional[Path] = None,
    metrics_out: Optional[Path] = None,
) -> int:
    defaults = load_protocol_defaults()
    unsafe = 0
    for path in paths:
        scenario = load_scenario(path, defaults)
        results = simulate_sweep(scenario, seeds, keep_trace=trace_out is not None)
        if trace_out is not None and results:
            trace_out.write_text(results[0].trace_text, encoding="utf-8")
            trace_out = None
        if metrics_out is not None and results:
            metrics_out.write_text(results[0].exposition, encoding="utf-8")
            metrics_out = None
        for result in results:
            print(_summarize(result))
            for violation in result.report.violations:
                print(f"  seq {violation.seq}: {violation.kind} at replicas {violation.replicas}")
            unsafe += not result.report.ok
    return EXIT_UNSAFE if unsafe else EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    if args.seeds is not None:
        seeds = _int_list(args.seeds)
    else:
        seeds = [args.seed if args.seed is not None else 0]
    return _run_scenarios([args.scenario], seeds, args.trace_out, args.metrics_out)


def cmd_suite(args: argparse.Namespace) -> int:
    paths = list_scenarios(args.dir)
    if not paths:
        raise UsageError(f"no scenario files found in {args.dir or get_settings().scenario_dir}")
    return _run_scenarios(paths, _int_list(args.seeds))


def cmd_check(args: argparse.Namespace) -> int:
    try:
        text = args.trace.read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read trace {args.trace}: {e}") from e
    report = check_safety(text)
    print(
        f"{args.trace}: {len(report.deliveries)} seqs, {len(report.violations)} violations, "
        f"{len(report.suspicions)} suspicions"
    )
    for violation in report.violations:
        print(f"  seq {violation.seq}: {violation.kind} at replicas {violation.replicas} {violation.detail}")
    return EXIT_OK if report.ok else EXIT_UNSAFE


def cmd_bench(args: argparse.Namespace) -> int:
    config = bench_config(args)
    result = run_bench(config)
    for p in result.points:
        print(
            f"mask={p.mask:<12} nd={p.nd_size:<5} clients={p.clients:<3} opt={'on' if p.opt else 'off':<3} "
            f"latency={p.mean_latency_us:>10.1f}us p99={p.p99_latency_us:>10.1f}us "
            f"throughput={p.throughput_rps:>9.1f}/s msgs={p.msgs_total} piggyback={p.piggyback_ratio:.2f}"
        )
    out_dir = args.out or get_settings().output_dir
    write_results(result, out_dir)
    print(f"results written to {out_dir}")
    return EXIT_OK if result.ok else EXIT_UNSAFE


COMMANDS = {"run": cmd_run, "check": cmd_check, "suite": cmd_suite, "bench": cmd_bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(log_level=args.log_level or settings.log_level, json_logs=args.json_logs or settings.json_logs)

    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, TraceError) as e:
        logger.error("command_failed", command=args.command, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
