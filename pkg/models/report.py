from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from models.slot import SuspicionEvent, SuspicionReason


class DeliveryDigests(BaseModel):
    """Hex digests one replica recorded when delivering one seq."""

    request: str
    nd: str
    result: Optional[str] = None


class SafetyViolation(BaseModel):
    seq: int
    kind: str
    replicas: List[int]
    detail: str = ""


class SafetyReport(BaseModel):
    """Outcome of checking one run for single-view safety."""

    correct_replicas: List[int] = Field(default_factory=list)
    faulty_replicas: List[int] = Field(default_factory=list)
    deliveries: Dict[int, Dict[int, DeliveryDigests]] = Field(default_factory=dict)
    violations: List[SafetyViolation] = Field(default_factory=list)
    suspicions: List[SuspicionEvent] = Field(default_factory=list)
    restarts: List[Dict[str, object]] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def suspicions_of(self, replica: int, reason: Optional[SuspicionReason] = None) -> List[SuspicionEvent]:
        return [
            s for s in self.suspicions
            if s.replica == replica and (reason is None or s.reason == reason)
        ]

    def delivered_seqs(self, replica: int) -> List[int]:
        return sorted(seq for seq, by_replica in self.deliveries.items() if replica in by_replica)


class RunMetrics(BaseModel):
    """Counters and latency samples of one run, in virtual time."""

    latencies_us: List[int] = Field(default_factory=list)
    completed: int = 0
    failed: int = 0
    messages_by_tag: Dict[str, int] = Field(default_factory=dict)
    bytes_by_tag: Dict[str, int] = Field(default_factory=dict)
    postnd_by_path: Dict[str, int] = Field(default_factory=dict)
    null_requests: int = 0
    suspicions: int = 0
    restarts: int = 0
    first_send_us: int = 0
    last_completion_us: int = 0
    end_time_us: int = 0

    @property
    def msgs_total(self) -> int:
        return sum(self.messages_by_tag.values())

    @property
    def bytes_total(self) -> int:
        return sum(self.bytes_by_tag.values())

    @property
    def piggyback_ratio(self) -> float:
        total = sum(self.postnd_by_path.values())
        if total == 0:
            return 0.0
        return self.postnd_by_path.get("piggyback", 0) / total

    @property
    def mean_latency_us(self) -> float:
        if not self.latencies_us:
            return 0.0
        return float(np.mean(self.latencies_us))

    def latency_percentile(self, q: float) -> float:
        if not self.latencies_us:
            return 0.0
        return float(np.percentile(self.latencies_us, q))

    @property
    def throughput_rps(self) -> float:
        window = self.last_completion_us - self.first_send_us
        if window <= 0:
            return 0.0
        return self.completed * 1_000_000 / window


class RunResult(BaseModel):
    scenario: str
    seed: int
    report: SafetyReport
    metrics: RunMetrics
    trace: List[str] = Field(default_factory=list)
    calls: List[dict] = Field(default_factory=list)
    exposition: str = ""

    @property
    def trace_text(self) -> str:
        return "\n".join(self.trace) + "\n"


class BenchConfig(BaseModel):
    """One benchmark sweep; every combination becomes one sweep point."""

    masks: List[int] = Field(default_factory=lambda: [0, 1, 2, 4, 8], min_length=1)
    nd_sizes: List[int] = Field(default_factory=lambda: [256], min_length=1)
    req_size: int = Field(default=1024, gt=0)
    reply_size: int = Field(default=1024, gt=0)
    clients: List[int] = Field(default_factory=lambda: [1], min_length=1)
    iters: int = Field(default=1000, ge=1)
    f: int = Field(default=1, ge=0)
    optimizations: List[bool] = Field(default_factory=lambda: [True], min_length=1)
    # uniform per-link jitter on top of the default delay; 0 keeps links fixed
    jitter_us: int = Field(default=10, ge=0)
    seed: int = 0

    @property
    def points(self) -> int:
        return len(self.masks) * len(self.nd_sizes) * len(self.clients) * len(self.optimizations)


class BenchPoint(BaseModel):
    mask: str
    nd_size: int
    clients: int
    mean_latency_us: float
    p99_latency_us: float
    throughput_rps: float
    msgs_total: int
    bytes_total: int
    piggyback_ratio: float
    opt: bool
    nd_bytes: int = 0
    completed: int = 0
    violations: int = 0
    messages_by_tag: Dict[str, int] = Field(default_factory=dict)
    bytes_by_tag: Dict[str, int] = Field(default_factory=dict)


class BenchResult(BaseModel):
    config: BenchConfig
    points: List[BenchPoint] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(p.violations == 0 for p in self.points)
