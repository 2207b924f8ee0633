import json
from typing import Any, Dict, List

from core.errors import TraceError


class TraceRecorder:
    """Append-only JSON-lines trace of one run."""

    def __init__(self):
        self.events: List[Dict[str, Any]] = []

    def record(self, kind: str, **fields: Any):
        event = {"kind": kind}
        event.update(fields)
        self.events.append(event)

    def of_kind(self, kind: str) -> List[Dict[str, Any]]:
        return [e for e in self.events if e["kind"] == kind]

    def lines(self) -> List[str]:
        return [json.dumps(e, sort_keys=True) for e in self.events]

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())


class NullRecorder:
    """Recorder that keeps nothing; used by replicas running outside a simulation."""

    def record(self, kind: str, **fields: Any):
        pass


def parse_trace(text: str) -> List[Dict[str, Any]]:
    """
    Parse a trace written by :class:`TraceRecorder`.

    Raises:
        TraceError: On malformed lines or a missing run_start/run_end bracket
    """
    events = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceError(f"line {number}: {e}") from e
        if not isinstance(event, dict) or "kind" not in event:
            raise TraceError(f"line {number}: record without kind")
        events.append(event)

    if not events or events[0]["kind"] != "run_start":
        raise TraceError("trace does not start with run_start")
    if events[-1]["kind"] != "run_end":
        raise TraceError("trace is truncated: run_end missing")
    return events
