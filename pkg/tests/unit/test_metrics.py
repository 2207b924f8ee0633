from models.message import MessageTag, Request
from models.session import CallStatus, PendingCall
from simnet.metrics import RunMetricsCollector


def _sample(collector, name, **labels):
    return collector.registry.get_sample_value(name, labels)


def _call(request_id, sent_at, completed_at, status):
    return PendingCall(
        request=Request(client=0, request_id=request_id, op=b"op"), sent_at=sent_at,
        deadline_at=sent_at + 100_000, retransmit_at=sent_at + 1_000, status=status, completed_at=completed_at,
    )


def test_summary_reads_counters_from_the_registry():
    collector = RunMetricsCollector()
    collector.message_sent(MessageTag.PREPARE, 120, copies=3)
    collector.message_sent(MessageTag.PREPARE, 80)
    collector.message_sent(MessageTag.COMMIT, 100, copies=3)
    events = [
        {"kind": "postnd_disseminated", "path": "piggyback"},
        {"kind": "postnd_disseminated", "path": "piggyback"},
        {"kind": "postnd_disseminated", "path": "null_request"},
        {"kind": "suspicion", "reason": "ND_VALUE_REJECTED"},
        {"kind": "null_request"},
    ]

    metrics = collector.summarize([], events, 1_000)

    assert metrics.messages_by_tag == {"COMMIT": 3, "PREPARE": 4}
    assert metrics.bytes_by_tag == {"COMMIT": 300, "PREPARE": 440}
    assert metrics.postnd_by_path == {"null_request": 1, "piggyback": 2}
    for tag, count in metrics.messages_by_tag.items():
        assert _sample(collector, "ndbft_messages_sent_total", tag=tag) == count
        assert _sample(collector, "ndbft_bytes_sent_total", tag=tag) == metrics.bytes_by_tag[tag]
    assert _sample(collector, "ndbft_postnd_entries_total", path="piggyback") == 2
    assert metrics.suspicions == 1
    assert metrics.null_requests == 1


def test_completed_calls_feed_latency_and_throughput():
    collector = RunMetricsCollector()
    calls = [
        _call(1, 100, 600, CallStatus.COMPLETED),
        _call(2, 600, 1_100, CallStatus.COMPLETED),
        _call(3, 1_100, None, CallStatus.TIMED_OUT),
    ]

    metrics = collector.summarize(calls, [], 2_000)

    assert (metrics.completed, metrics.failed) == (2, 1)
    assert metrics.first_send_us == 100
    assert metrics.last_completion_us == 1_100
    assert _sample(collector, "ndbft_request_latency_us_count") == 2
