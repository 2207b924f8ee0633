import pytest

from models.slot import SuspicionReason
from services.watchdog import ExecutionFailure
from simnet.simulator import run

BACKUPS = (1, 2, 3)


@pytest.mark.parametrize("stem, reason", [
    ("faulty_primary_wrong_vpre", SuspicionReason.ND_VALUE_REJECTED),
    ("faulty_primary_wrong_nd_type", SuspicionReason.ND_TYPE_MISMATCH),
    ("faulty_primary_forge_ppu", SuspicionReason.ND_VALUE_REJECTED),
    ("faulty_primary_wrong_postnd_vpost", SuspicionReason.ND_VALUE_REJECTED),
    ("faulty_primary_wrong_reply_digest", SuspicionReason.REPLY_DIGEST_MISMATCH),
    ("faulty_primary_deadlock_order", SuspicionReason.EXEC_CRASH_OR_DEADLOCK),
    ("faulty_primary_omit_ppu", SuspicionReason.ND_AGREEMENT_FAILED),
])
def test_every_correct_backup_suspects_the_primary(shipped, stem, reason):
    scenario = shipped(stem)
    trigger = scenario.faults[0].trigger
    result = run(scenario, seed=0)

    assert result.report.ok
    for backup in BACKUPS:
        raised = result.report.suspicions_of(backup, reason)
        assert raised, f"replica {backup} raised no {reason.value}"
        assert all(trigger.covers(s.seq) for s in raised)


def test_wrong_reply_digest_does_not_block_the_client(shipped):
    result = run(shipped("faulty_primary_wrong_reply_digest"), seed=0)

    assert result.metrics.completed == 10
    assert result.metrics.failed == 0
    assert result.metrics.suspicions >= len(BACKUPS)


def test_deadlock_is_rejected_before_replay(shipped):
    result = run(shipped("faulty_primary_deadlock_order"), seed=0)

    for backup in BACKUPS:
        raised = result.report.suspicions_of(backup, SuspicionReason.EXEC_CRASH_OR_DEADLOCK)
        assert raised[0].details.startswith(b"deadlock:")
    assert result.report.restarts == []


def test_stalling_order_restarts_backups_from_their_snapshot(shipped):
    result = run(shipped("faulty_primary_crash_order"), seed=0)

    assert result.report.ok
    restarted = sorted(r["replica"] for r in result.report.restarts)
    assert restarted == list(BACKUPS)
    for restart in result.report.restarts:
        assert restart["seq"] == 3
        assert restart["failure"] == ExecutionFailure.BUDGET_EXHAUSTED.value
        assert restart["before"] == restart["after"]
        assert restart["consumed_us"] == 100_000


def test_no_suspicion_without_faults(shipped):
    result = run(shipped("npost_fault_free"), seed=0)

    assert result.metrics.suspicions == 0
    assert result.metrics.restarts == 0
