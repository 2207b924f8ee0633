from typing import Dict, Iterable

from prometheus_client import CollectorRegistry, Counter, Histogram, generate_latest

from models.message import MessageTag
from models.report import RunMetrics
from models.session import CallStatus, PendingCall

LATENCY_BUCKETS_US = (250, 500, 1_000, 2_000, 5_000, 10_000, 20_000, 50_000, 100_000, 500_000, 5_000_000)


class RunMetricsCollector:
    """
    Prometheus counters for one simulation run.

    Each run owns its registry so concurrent or repeated runs never share
    state.
    """

    def __init__(self):
        self.registry = CollectorRegistry()
        self.messages = Counter(
            "ndbft_messages_sent", "Messages put on the wire", ["tag"], registry=self.registry
        )
        self.bytes = Counter(
            "ndbft_bytes_sent", "Bytes put on the wire", ["tag"], registry=self.registry
        )
        self.suspicions = Counter(
            "ndbft_suspicions", "Suspicions raised by correct replicas", ["reason"], registry=self.registry
        )
        self.postnd_entries = Counter(
            "ndbft_postnd_entries", "Postnd entries by dissemination path", ["path"], registry=self.registry
        )
        self.null_requests = Counter(
            "ndbft_null_requests", "Null requests issued by the primary", registry=self.registry
        )
        self.restarts = Counter(
            "ndbft_restarts", "Watchdog restarts", registry=self.registry
        )
        self.latency = Histogram(
            "ndbft_request_latency_us", "End-to-end request latency in virtual microseconds",
            buckets=LATENCY_BUCKETS_US, registry=self.registry,
        )

    def message_sent(self, tag: MessageTag, size: int, copies: int = 1):
        name = tag.name
        self.messages.labels(tag=name).inc(copies)
        self.bytes.labels(tag=name).inc(size * copies)

    def observe_trace_event(self, event: dict):
        kind = event["kind"]
        if kind == "suspicion":
            self.suspicions.labels(reason=event["reason"]).inc()
        elif kind == "postnd_disseminated":
            self.postnd_entries.labels(path=event["path"]).inc()
        elif kind == "null_request":
            self.null_requests.inc()
        elif kind == "restart":
            self.restarts.inc()

    def summarize(self, calls: Iterable[PendingCall], events: Iterable[dict], end_time_us: int) -> RunMetrics:
        for event in events:
            self.observe_trace_event(event)

        metrics = RunMetrics(
            messages_by_tag=self._by_label("ndbft_messages_sent_total", "tag"),
            bytes_by_tag=self._by_label("ndbft_bytes_sent_total", "tag"),
            postnd_by_path=self._by_label("ndbft_postnd_entries_total", "path"),
            end_time_us=end_time_us,
        )
        first_send = None
        for call in calls:
            first_send = call.sent_at if first_send is None else min(first_send, call.sent_at)
            if call.status == CallStatus.COMPLETED:
                metrics.completed += 1
                metrics.latencies_us.append(call.latency_us)
                metrics.last_completion_us = max(metrics.last_completion_us, call.completed_at)
                self.latency.observe(call.latency_us)
            else:
                metrics.failed += 1
        metrics.first_send_us = first_send or 0
        metrics.null_requests = int(self._sample("ndbft_null_requests_total"))
        metrics.suspicions = sum(self._by_label("ndbft_suspicions_total", "reason").values())
        metrics.restarts = int(self._sample("ndbft_restarts_total"))
        return metrics

    def _sample(self, name: str, labels: Dict[str, str] = None) -> float:
        return self.registry.get_sample_value(name, labels or {}) or 0.0

    def _by_label(self, name: str, label: str) -> Dict[str, int]:
        """Sample values of counter ``name`` keyed by one label, sorted by label value."""
        values = {}
        for family in self.registry.collect():
            for sample in family.samples:
                if sample.name == name:
                    values[sample.labels[label]] = int(sample.value)
        return dict(sorted(values.items()))

    def exposition(self) -> bytes:
        """Prometheus text format of every metric of the run."""
        return generate_latest(self.registry)
