import itertools
import json
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from models.payload import mask_name
from models.report import BenchConfig, BenchPoint, BenchResult, RunResult
from models.scenario import Scenario
from simnet.scenarios import load_protocol_defaults, scenario_from_dict
from simnet.simulator import run
from utils.logging_config import get_logger

logger = get_logger(__name__)

CSV_COLUMNS = [
    "mask",
    "nd_size",
    "clients",
    "mean_latency_us",
    "p99_latency_us",
    "throughput_rps",
    "msgs_total",
    "bytes_total",
    "piggyback_ratio",
    "opt",
    "nd_bytes",
    "completed",
    "violations",
]


def bench_scenario(
    config: BenchConfig,
    mask: int,
    nd_size: int,
    clients: int,
    optimized: bool,
    defaults: Optional[Dict[str, Any]] = None,
) -> Scenario:
    """Closed-loop synthetic workload for one sweep point."""
    data = {
        "name": f"bench-{mask_name(mask)}-{nd_size}B-{clients}c-{'opt' if optimized else 'noopt'}",
        "f": config.f,
        "app": {"name": "synthetic", "options": {"mask": mask}},
        "workload": {
            "clients": clients,
            "requests_per_client": config.iters,
            "request_size": config.req_size,
            "reply_size": config.reply_size,
            "nd_value_size": nd_size,
        },
    }
    if config.jitter_us:
        data["delay"] = {"kind": "uniform", "jitter_us": config.jitter_us}
    scenario = scenario_from_dict(data, defaults)
    return scenario.model_copy(update={"protocol": scenario.protocol.with_optimizations(optimized)})


def _point(result: RunResult, mask: int, nd_size: int, clients: int, optimized: bool) -> BenchPoint:
    m = result.metrics
    return BenchPoint(
        mask=mask_name(mask),
        nd_size=nd_size,
        clients=clients,
        mean_latency_us=round(m.mean_latency_us, 3),
        p99_latency_us=round(m.latency_percentile(99), 3),
        throughput_rps=round(m.throughput_rps, 3),
        msgs_total=m.msgs_total,
        bytes_total=m.bytes_total,
        piggyback_ratio=round(m.piggyback_ratio, 4),
        opt=optimized,
        nd_bytes=nd_size * bin(mask).count("1"),
        completed=m.completed,
        violations=len(result.report.violations),
        messages_by_tag=m.messages_by_tag,
        bytes_by_tag=m.bytes_by_tag,
    )


def run_bench(config: BenchConfig) -> BenchResult:
    """
    Run every sweep point of ``config`` in simulated time.

    Points are run sequentially in a fixed order (optimizations, mask, value
    size, clients), so the result is a pure function of the config.

    Args:
        config: Sweep description

    Returns:
        BenchResult with one point per combination
    """
    defaults = load_protocol_defaults()
    result = BenchResult(config=config)
    logger.info("bench_started", points=config.points, iters=config.iters, f=config.f)

    for optimized, mask, nd_size, clients in itertools.product(
        config.optimizations, config.masks, config.nd_sizes, config.clients
    ):
        scenario = bench_scenario(config, mask, nd_size, clients, optimized, defaults)
        outcome = run(scenario, config.seed, keep_trace=False)
        point = _point(outcome, mask, nd_size, clients, optimized)
        result.points.append(point)
        logger.info(
            "bench_point_finished",
            mask=point.mask,
            nd_size=nd_size,
            clients=clients,
            opt=optimized,
            mean_latency_us=point.mean_latency_us,
            throughput_rps=point.throughput_rps,
        )
        if point.violations:
            logger.error("bench_point_unsafe", mask=point.mask, violations=point.violations)

    return result


def results_frame(result: BenchResult) -> pd.DataFrame:
    rows = [point.model_dump(include=set(CSV_COLUMNS)) for point in result.points]
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def write_results(result: BenchResult, out_dir: Path) -> Dict[str, Path]:
    """
    Write ``results.csv`` (one row per sweep point) and ``summary.json``.

    Returns:
        Mapping of artifact name to written path
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    csv_path = out_dir / "results.csv"
    results_frame(result).to_csv(csv_path, index=False)

    summary = {
        "config": result.config.model_dump(),
        "points": [point.model_dump() for point in result.points],
        "ok": result.ok,
    }
    json_path = out_dir / "summary.json"
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    logger.info("bench_results_written", csv=str(csv_path), summary=str(json_path))
    return {"csv": csv_path, "summary": json_path}
