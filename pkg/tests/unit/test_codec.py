import random

import pytest

from core.codec import (
    decode,
    decode_envelope,
    encode,
    encode_envelope,
    encode_nd_data,
    peek_tag,
)
from core.crypto import authenticate, digest
from core.errors import DecodeError
from models.auth import Address, AuthMode, AuthTag
from models.message import (
    MESSAGE_TYPES,
    U32,
    U64,
    Commit,
    FetchNd,
    FetchSlot,
    MessageTag,
    NdValues,
    PostcCommit,
    PostcPrepare,
    PostcPrePrepare,
    PpuContrib,
    PpuDecision,
    Prepare,
    PrePrepare,
    Reply,
    ReplyStatus,
    Request,
    RequestMessage,
)
from models.payload import SINGLE_CLASSES, DecisionEntry, NdPayload, NdSegment, NdType, PostndRecord


@pytest.fixture
def pre_prepare(keyring):
    request = Request(client=1, request_id=7, op=b"op-bytes")
    record = PostndRecord(
        seq=3,
        values=(NdSegment(nd_type=NdType.NPOST, data=b"\x01\x02"),),
        reply_digest=digest(b"r"),
    )
    return PrePrepare(
        view=0, seq=4, sender=0, epoch=2,
        request=request,
        client_auth=authenticate(Address.client(1), b"x", keyring),
        mask=int(NdType.VPRE | NdType.NPOST),
        payload=NdPayload(segments=(NdSegment(nd_type=NdType.VPRE, data=b"seed"),)),
        piggyback=(record,),
    )


def test_pre_prepare_survives_the_wire(pre_prepare):
    data = encode(pre_prepare)
    assert data[0] == MessageTag.PRE_PREPARE
    assert decode(data) == pre_prepare


def test_header_layout_is_little_endian():
    data = encode(FetchSlot(view=1, seq=2, sender=3, epoch=4))
    assert data == bytes([13]) + (1).to_bytes(8, "little") + (2).to_bytes(8, "little") \
        + (3).to_bytes(4, "little") + (4).to_bytes(4, "little")


def test_truncated_input_reports_offset(pre_prepare):
    data = encode(pre_prepare)
    with pytest.raises(DecodeError) as exc:
        decode(data[:-5])
    assert exc.value.offset <= len(data)


def test_trailing_bytes_rejected(pre_prepare):
    with pytest.raises(DecodeError):
        decode(encode(pre_prepare) + b"\x00")


def test_unknown_tag_rejected():
    with pytest.raises(DecodeError):
        decode(bytes([99]) + bytes(24))
    assert peek_tag(bytes([99])) is None
    assert peek_tag(bytes([10])) == MessageTag.REPLY


def test_invalid_mask_is_a_decode_error(pre_prepare):
    plain = pre_prepare.model_copy(update={"mask": 0, "client_auth": None})
    data = bytearray(encode(plain))
    # header (25) + request (4 + 8 + 4 + 8) + client_auth flag (1)
    mask_at = 25 + 24 + 1
    assert data[mask_at] == 0
    data[mask_at] = 0x10
    with pytest.raises(DecodeError):
        decode(bytes(data))


def test_envelope_carries_auth(keyring):
    msg = Prepare(seq=5, sender=2, request_digest=digest(b"a"), nd_digest=digest(b"b"))
    msg_bytes = encode(msg)
    tag = authenticate(Address.replica(2), msg_bytes, keyring)
    decoded, auth, signed = decode_envelope(encode_envelope(msg_bytes, tag))
    assert decoded == msg
    assert auth == tag
    assert signed == msg_bytes


def test_reply_status_byte():
    reply = Reply(seq=1, client=0, request_id=1, status=ReplyStatus.APP_ERROR, result=b"no", result_digest=digest(b"no"))
    data = bytearray(encode(reply))
    assert decode(bytes(data)).status == ReplyStatus.APP_ERROR
    status_at = 1 + 24 + 4 + 8
    data[status_at] = 7
    with pytest.raises(DecodeError):
        decode(bytes(data))


def test_nd_data_ignores_decision_values(keyring):
    tag = authenticate(Address.replica(1), b"share", keyring, AuthMode.SIGNATURE)
    full = DecisionEntry(proposer=1, value=b"v" * 64, value_digest=digest(b"v" * 64), tag=tag)
    segments = (NdSegment(nd_type=NdType.NPRE, data=b"p"),)
    assert encode_nd_data(segments, (full,)) == encode_nd_data(segments, (full.without_value(),))


def test_decision_with_and_without_values_decodes(keyring):
    tag = authenticate(Address.replica(1), b"share", keyring, AuthMode.SIGNATURE)
    entry = DecisionEntry(proposer=1, value=b"v", value_digest=digest(b"v"), tag=tag)
    msg = PpuDecision(seq=9, request_digest=digest(b"req"), entries=(entry, entry.without_value().model_copy(update={"proposer": 2})))
    decoded = decode(encode(msg))
    assert decoded.entries[0].value == b"v"
    assert decoded.entries[1].value is None


# -- randomized messages ------------------------------------------------------


def _bytes(rng: random.Random, max_len: int = 24) -> bytes:
    return rng.randbytes(rng.randint(0, max_len))


def _digest(rng: random.Random) -> bytes:
    return rng.randbytes(32)


def _auth(rng: random.Random) -> AuthTag:
    if rng.random() < 0.5:
        return AuthTag(mode=AuthMode.SIGNATURE, entries=(rng.randbytes(64),))
    return AuthTag(mode=AuthMode.AUTHENTICATOR, entries=tuple(rng.randbytes(16) for _ in range(rng.randint(0, 7))))


def _segments(rng: random.Random):
    classes = rng.sample(SINGLE_CLASSES, rng.randint(0, len(SINGLE_CLASSES)))
    return tuple(NdSegment(nd_type=c, data=_bytes(rng)) for c in classes)


def _entries(rng: random.Random):
    proposers = rng.sample(range(10), rng.randint(0, 4))
    return tuple(
        DecisionEntry(
            proposer=p, value=_bytes(rng) if rng.random() < 0.5 else None,
            value_digest=_digest(rng), tag=_auth(rng),
        )
        for p in proposers
    )


def _record(rng: random.Random) -> PostndRecord:
    return PostndRecord(seq=rng.randint(1, U64), values=_segments(rng), reply_digest=_digest(rng))


def _request(rng: random.Random) -> Request:
    return Request(client=rng.randint(0, U32), request_id=rng.randint(0, U64), op=_bytes(rng))


def random_message(rng: random.Random):
    """One message of a random type with random header and body fields."""
    header = {
        "view": rng.randint(0, U64), "seq": rng.randint(0, U64),
        "sender": rng.randint(0, U32), "epoch": rng.randint(0, U32),
    }
    cls = MESSAGE_TYPES[rng.choice(list(MESSAGE_TYPES))]
    if cls is RequestMessage:
        body = {"request": _request(rng)}
    elif cls is PrePrepare:
        body = {
            "request": _request(rng),
            "client_auth": _auth(rng) if rng.random() < 0.7 else None,
            "mask": rng.randint(0, 0x0F),
            "payload": NdPayload(segments=_segments(rng), decision=_entries(rng)),
            "piggyback": tuple(_record(rng) for _ in range(rng.randint(0, 3))),
        }
    elif cls is PpuContrib:
        body = {"request_digest": _digest(rng), "share": _bytes(rng), "share_tag": _auth(rng)}
    elif cls in (PpuDecision, NdValues):
        body = {"request_digest": _digest(rng), "entries": _entries(rng)}
    elif cls in (Prepare, Commit):
        body = {"request_digest": _digest(rng), "nd_digest": _digest(rng)}
    elif cls is PostcPrePrepare:
        body = {"record": _record(rng)}
    elif cls in (PostcPrepare, PostcCommit):
        body = {"postnd_digest": _digest(rng)}
    elif cls is Reply:
        body = {
            "client": rng.randint(0, U32), "request_id": rng.randint(0, U64),
            "status": rng.choice(list(ReplyStatus)), "result": _bytes(rng), "result_digest": _digest(rng),
        }
    elif cls is FetchNd:
        body = {"request_digest": _digest(rng), "missing": tuple(rng.randint(0, U32) for _ in range(rng.randint(0, 4)))}
    else:
        body = {}
    return cls(**header, **body)


@pytest.mark.parametrize("seed", range(20))
def test_random_messages_survive_the_wire(seed):
    rng = random.Random(seed)
    for _ in range(100):
        msg = random_message(rng)
        assert decode(encode(msg)) == msg


def test_distinct_messages_never_share_an_encoding():
    rng = random.Random(2718)
    seen = {}
    tags = set()
    for _ in range(10_000):
        msg = random_message(rng)
        data = encode(msg)
        assert seen.setdefault(data, msg) == msg
        tags.add(msg.tag)

    assert tags == set(MessageTag)
