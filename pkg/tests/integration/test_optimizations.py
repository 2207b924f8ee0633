import pytest

from simnet.simulator import run


@pytest.mark.parametrize("seed", [0, 1])
def test_optimizations_do_not_change_client_visible_history(synthetic, histories, seed):
    on = run(synthetic("NPRE|NPOST", requests=8, optimized=True), seed)
    off = run(synthetic("NPRE|NPOST", requests=8, optimized=False), seed)

    assert on.report.ok and off.report.ok
    with_opt, without_opt = histories(on.trace), histories(off.trace)
    assert sorted(with_opt) == [0, 1, 2, 3]
    for replica in range(4):
        assert len(with_opt[replica]) == 8
        assert with_opt[replica] == without_opt[replica]


def test_digest_dissemination_shrinks_decisions(synthetic):
    kwargs = dict(requests=5, nd_value_size=4096, request_size=1024)
    on = run(synthetic("NPRE", optimized=True, **kwargs), 0, keep_trace=False).metrics
    off = run(synthetic("NPRE", optimized=False, **kwargs), 0, keep_trace=False).metrics

    assert on.completed == off.completed == 5
    per_decision_on = on.bytes_by_tag["PPU_DECISION"] / on.messages_by_tag["PPU_DECISION"]
    per_decision_off = off.bytes_by_tag["PPU_DECISION"] / off.messages_by_tag["PPU_DECISION"]
    assert per_decision_off >= 8 * per_decision_on
    assert off.bytes_by_tag["PPU_DECISION"] >= 8 * on.bytes_by_tag["PPU_DECISION"]


def test_piggybacking_carries_postnd_entries_on_client_requests(synthetic):
    kwargs = dict(clients=8, requests=20, request_size=1024, reply_size=1024, nd_value_size=256)
    on = run(synthetic("NPOST", optimized=True, **kwargs), 0, keep_trace=False)
    off = run(synthetic("NPOST", optimized=False, **kwargs), 0, keep_trace=False)

    assert on.report.ok and off.report.ok
    assert on.metrics.completed == off.metrics.completed == 160
    assert on.metrics.piggyback_ratio >= 0.9
    assert off.metrics.piggyback_ratio == 0.0
    assert off.metrics.postnd_by_path == {"standalone": 160}
    assert on.metrics.msgs_total < off.metrics.msgs_total
    assert "POSTC_PRE_PREPARE" not in on.metrics.messages_by_tag


def test_single_client_falls_back_to_null_requests(synthetic):
    result = run(synthetic("NPOST", requests=4), 0, keep_trace=False)

    assert result.metrics.completed == 4
    assert result.metrics.null_requests >= 1
    assert result.metrics.postnd_by_path.get("null_request", 0) >= 1
