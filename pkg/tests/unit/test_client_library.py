import pytest

from core.codec import encode, encode_envelope
from core.crypto import authenticate, digest
from core.errors import CallTimeout, NdBftError, RequestRejected
from models.auth import Address
from models.message import MessageTag, Reply, ReplyStatus
from models.scenario import ProtocolConfig
from models.session import CallStatus
from services.client_library import BftClient

CONFIG = ProtocolConfig(client_retransmit_us=1_000, client_deadline_us=100_000)


def reply_from(keyring, replica, request_id, result=b"ok", status=ReplyStatus.OK, result_digest=None, client=0):
    reply = Reply(
        view=0, seq=1, sender=replica, client=client, request_id=request_id, status=status,
        result=result, result_digest=result_digest or digest(result),
    )
    msg_bytes = encode(reply)
    return encode_envelope(msg_bytes, authenticate(Address.replica(replica), msg_bytes, keyring, receivers=(Address.client(client),)))


@pytest.fixture
def client(keyring):
    return BftClient(0, 1, keyring, CONFIG)


def test_first_request_goes_to_primary(client):
    out = client.start([b"op-1", b"op-2"], 0)

    assert [(m.tag, m.destinations) for m in out.messages] == [(MessageTag.REQUEST, (Address.replica(0),))]
    assert sorted(t.key for t in out.timers) == ["deadline", "retransmit"]
    assert client.call.request_id == 1


def test_needs_f_plus_one_matching_replies(client, keyring):
    client.start([b"op-1", b"op-2"], 0)

    client.on_message(reply_from(keyring, 1, 1, b"A"), 10)
    client.on_message(reply_from(keyring, 1, 1, b"A"), 11)
    assert client.call.status == CallStatus.PENDING
    client.on_message(reply_from(keyring, 2, 1, b"B"), 12)
    assert client.call.request_id == 1

    out = client.on_message(reply_from(keyring, 3, 1, b"A"), 13)

    first = client.finished[0]
    assert first.status == CallStatus.COMPLETED
    assert BftClient.result_of(first) == b"A"
    assert first.latency_us == 13
    assert client.call.request_id == 2
    assert [m.tag for m in out.messages] == [MessageTag.REQUEST]


def test_replies_for_other_requests_or_with_bad_digest_are_ignored(client, keyring):
    client.start([b"op"], 0)

    client.on_message(reply_from(keyring, 1, 7, b"A"), 1)
    client.on_message(reply_from(keyring, 2, 1, b"A", result_digest=digest(b"other")), 2)
    client.on_message(reply_from(keyring, 3, 1, b"A", client=1), 3)
    client.on_message(b"\x00garbage", 4)

    assert client.call.replies == {}


def test_application_error_from_primary_rejects_the_call(client, keyring):
    client.start([b"bad", b"next"], 0)

    client.on_message(reply_from(keyring, 2, 1, b"nope", status=ReplyStatus.APP_ERROR), 1)
    assert client.call is not None

    client.on_message(reply_from(keyring, 0, 1, b"nope", status=ReplyStatus.APP_ERROR), 2)

    assert client.finished[0].status == CallStatus.REJECTED
    with pytest.raises(RequestRejected):
        BftClient.result_of(client.finished[0])


def test_rejected_call_does_not_stop_the_workload(client, keyring):
    client.start([b"bad", b"op-2", b"op-3"], 0)

    out = client.on_message(reply_from(keyring, 0, 1, b"nope", status=ReplyStatus.APP_ERROR), 1)

    assert [m.tag for m in out.messages] == [MessageTag.REQUEST]
    assert client.call.request_id == 2
    assert not client.stopped and not client.done

    for replica in (1, 2):
        client.on_message(reply_from(keyring, replica, 2, b"A"), 5)
    assert [c.status for c in client.finished] == [CallStatus.REJECTED, CallStatus.COMPLETED]
    assert client.call.request_id == 3


def test_retransmissions_go_to_all_replicas_with_backoff(client):
    client.start([b"op"], 0)

    out = client.on_timer("retransmit", 1_000)
    assert set(out.messages[0].destinations) == {Address.replica(i) for i in range(4)}
    assert out.timers[0].fire_at == 3_000

    assert not client.on_timer("retransmit", 2_000)
    out = client.on_timer("retransmit", 3_000)
    assert out.timers[0].fire_at == 7_000
    assert client.call.retransmissions == 2


def test_deadline_times_out_and_stops_the_workload(client):
    client.start([b"op-1", b"op-2"], 0)

    out = client.on_timer("deadline", 100_000)

    assert not out.messages
    assert client.finished[0].status == CallStatus.TIMED_OUT
    assert client.done
    with pytest.raises(CallTimeout):
        BftClient.result_of(client.finished[0])


def test_one_outstanding_call_at_a_time(client):
    client.invoke(b"op", 0)
    with pytest.raises(NdBftError):
        client.invoke(b"op", 1)


def test_think_time_delays_the_next_request(keyring):
    client = BftClient(0, 1, keyring, CONFIG, think_time_us=500)
    client.start([b"op-1", b"op-2"], 0)
    for replica in (1, 2):
        out = client.on_message(reply_from(keyring, replica, 1), 10)

    assert not out.messages
    assert [(t.key, t.fire_at) for t in out.timers] == [("next", 510)]
    out = client.on_timer("next", 510)
    assert [m.tag for m in out.messages] == [MessageTag.REQUEST]
