from typing import Dict, Iterable, List, Union

from core.errors import TraceError
from models.report import DeliveryDigests, SafetyReport, SafetyViolation
from models.slot import SuspicionEvent, SuspicionReason
from simnet.trace import parse_trace
from utils.logging_config import get_logger

logger = get_logger(__name__)


def check_safety(trace: Union[str, Iterable[dict]]) -> SafetyReport:
    """
    Check a complete run trace for single-view safety.

    Every pair of correct replicas must deliver the same request with the
    same nondeterministic data and result at each seq, and each correct
    replica must deliver a gapless prefix 1, 2, 3, ... in order. The
    primary's delivery record covers the values it recorded, so a correct
    primary is compared against what backups replayed.

    Args:
        trace: Trace text or already parsed events

    Returns:
        SafetyReport; ``ok`` is True when no violation was found

    Raises:
        TraceError: If the trace is truncated or malformed
    """
    events = parse_trace(trace) if isinstance(trace, str) else list(trace)
    if not events or events[0]["kind"] != "run_start":
        raise TraceError("trace does not start with run_start")
    if events[-1]["kind"] != "run_end":
        raise TraceError("trace is truncated: run_end missing")

    start = events[0]
    n = int(start["n"])
    faulty = sorted(int(r) for r in start.get("faulty", []))
    correct = [r for r in range(n) if r not in faulty]
    report = SafetyReport(correct_replicas=correct, faulty_replicas=faulty)

    next_expected: Dict[int, int] = {r: 1 for r in correct}
    for event in events:
        kind = event["kind"]
        replica = event.get("replica")
        if kind == "suspicion":
            report.suspicions.append(SuspicionEvent(
                replica=replica, seq=event["seq"], reason=SuspicionReason(event["reason"]),
                details=bytes.fromhex(event.get("details", "")), at_us=event.get("t", 0),
            ))
        elif kind == "restart":
            report.restarts.append({k: v for k, v in event.items() if k != "kind"})
        elif kind == "delivered":
            _check_delivery(report, event, correct, next_expected)

    for seq, by_replica in sorted(report.deliveries.items()):
        _compare(report, seq, by_replica)

    if report.violations:
        logger.warning("safety_violations_found", count=len(report.violations))
    return report


def _check_delivery(report: SafetyReport, event: dict, correct: List[int], next_expected: Dict[int, int]):
    replica = event["replica"]
    seq = event["seq"]
    digests = DeliveryDigests(request=event["request"], nd=event["nd"], result=event.get("result"))
    by_replica = report.deliveries.setdefault(seq, {})

    if replica not in correct:
        by_replica[replica] = digests
        return
    if replica in by_replica:
        report.violations.append(SafetyViolation(
            seq=seq, kind="duplicate_delivery", replicas=[replica], detail="seq delivered twice",
        ))
        return
    by_replica[replica] = digests
    if seq != next_expected[replica]:
        report.violations.append(SafetyViolation(
            seq=seq, kind="out_of_order", replicas=[replica],
            detail=f"expected seq {next_expected[replica]}",
        ))
    next_expected[replica] = seq + 1


def _compare(report: SafetyReport, seq: int, by_replica: Dict[int, DeliveryDigests]):
    correct = [r for r in sorted(by_replica) if r in report.correct_replicas]
    if len(correct) < 2:
        return
    reference = by_replica[correct[0]]
    for field in ("request", "nd", "result"):
        expected = getattr(reference, field)
        differing = [r for r in correct[1:] if getattr(by_replica[r], field) != expected]
        if differing:
            report.violations.append(SafetyViolation(
                seq=seq, kind=f"{field}_mismatch", replicas=[correct[0]] + differing,
                detail=f"{field} digests differ between correct replicas",
            ))
