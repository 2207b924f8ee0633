#!/usr/bin/env python3
"""
Demo script for the nondeterminism-aware BFT replicas.
Runs every shipped scenario in the simulated network and shows what the
correct replicas noticed about the faulty ones.
"""

import sys
from collections import Counter
from typing import List

from models.report import RunResult
from models.scenario import Scenario
from simnet.scenarios import load_suite
from simnet.simulator import run
from utils import setup_logging

DEMO_SEED = 7


class DemoScenario:
    """One scenario run with a readable report."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.result: RunResult = None

    def run(self) -> RunResult:
        s = self.scenario
        print(f"\n{'=' * 60}")
        print(f"Scenario: {s.name}")
        print(f"Description: {s.description or '-'}")
        print(f"Replicas: n={s.n} f={s.f}  app={s.app.name}  clients={s.workload.clients}")
        print("=" * 60)

        self.result = run(s, DEMO_SEED, keep_trace=True)
        self.show_faults()
        self.show_outcome()
        return self.result

    def show_faults(self):
        if not self.scenario.faults:
            print("\n  no scripted faults")
            return
        for fault in self.scenario.faults:
            window = f"seq {fault.trigger.from_seq}"
            if fault.trigger.to_seq:
                window += f"-{fault.trigger.to_seq}"
            print(f"\n  replica {fault.replica}: {fault.behavior.value} ({window})")

    def show_outcome(self):
        report = self.result.report
        metrics = self.result.metrics

        print(f"\n  delivered seqs: {len(report.deliveries)}")
        print(f"  client calls:   {metrics.completed} completed, {metrics.failed} failed")
        print(f"  mean latency:   {metrics.mean_latency_us / 1000:.2f} ms (virtual)")

        reasons = Counter((s.replica, s.reason.value) for s in report.suspicions)
        for (replica, reason), count in sorted(reasons.items()):
            print(f"  replica {replica} suspects the primary: {reason} x{count}")
        for restart in report.restarts:
            print(f"  replica {restart['replica']} restarted at seq {restart['seq']} ({restart['failure']})")

        if report.ok:
            print("\n  SAFE: correct replicas agree on every delivered seq")
        else:
            print(f"\n  UNSAFE: {len(report.violations)} violations")
            for violation in report.violations:
                print(f"    seq {violation.seq}: {violation.kind} {violation.replicas}")


def main() -> int:
    setup_logging(log_level="WARNING", json_logs=False)
    scenarios = load_suite()

    print("Nondeterminism control in BFT replication - scenario walkthrough")
    print(f"{len(scenarios)} scenarios, seed {DEMO_SEED}")

    results: List[RunResult] = [DemoScenario(s).run() for s in scenarios]

    unsafe = [r.scenario for r in results if not r.report.ok]
    print(f"\n{'=' * 60}")
    print(f"{len(results) - len(unsafe)}/{len(results)} scenarios safe")
    if unsafe:
        print("unsafe: " + ", ".join(unsafe))
    return 1 if unsafe else 0


if __name__ == "__main__":
    sys.exit(main())
