from .runner import CSV_COLUMNS, bench_scenario, results_frame, run_bench, write_results

__all__ = ["CSV_COLUMNS", "bench_scenario", "results_frame", "run_bench", "write_results"]
