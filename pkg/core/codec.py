"""
Canonical wire encoding.

Little-endian fixed-width integers, u32 length prefixes on variable byte
fields, fields in declaration order. Every message starts with its tag byte
followed by the common header (view u64, seq u64, sender u32, epoch u32).
An envelope is an encoded message followed by its encoded AuthTag.
"""

import struct
from typing import Callable, Dict, Optional, Sequence, Tuple, Type

from pydantic import ValidationError

from core.errors import DecodeError
from models.auth import AuthMode, AuthTag
from models.message import (
    MESSAGE_TYPES,
    AnyMessage,
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
    ProtocolMessage,
    Reply,
    ReplyStatus,
    Request,
    RequestMessage,
)
from models.payload import DIGEST_SIZE, DecisionEntry, NdPayload, NdSegment, NdType, PostndRecord

_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class Writer:
    def __init__(self):
        self.buf = bytearray()

    def u8(self, v: int) -> "Writer":
        self.buf += _U8.pack(v)
        return self

    def u16(self, v: int) -> "Writer":
        self.buf += _U16.pack(v)
        return self

    def u32(self, v: int) -> "Writer":
        self.buf += _U32.pack(v)
        return self

    def u64(self, v: int) -> "Writer":
        self.buf += _U64.pack(v)
        return self

    def raw(self, data: bytes) -> "Writer":
        self.buf += data
        return self

    def blob(self, data: bytes) -> "Writer":
        self.u32(len(data))
        self.buf += data
        return self

    def bytes(self) -> bytes:
        return bytes(self.buf)


class Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def _take(self, n: int) -> memoryview:
        if self.pos + n > len(self.data):
            raise DecodeError(self.pos, f"truncated: need {n} bytes, {len(self.data) - self.pos} left")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return _U8.unpack(self._take(1))[0]

    def u16(self) -> int:
        return _U16.unpack(self._take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return bytes(self._take(n))

    def blob(self) -> bytes:
        return self.raw(self.u32())

    def flag(self) -> bool:
        at = self.pos
        v = self.u8()
        if v > 1:
            raise DecodeError(at, f"invalid flag byte {v}")
        return bool(v)

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos


# -- field groups -----------------------------------------------------------

def _write_auth(w: Writer, tag: AuthTag):
    w.u8(tag.mode).u16(len(tag.entries))
    for entry in tag.entries:
        w.blob(entry)


def _read_auth(r: Reader) -> AuthTag:
    at = r.pos
    mode = r.u8()
    if mode not in AuthMode._value2member_map_:
        raise DecodeError(at, f"unknown auth mode {mode}")
    entries = tuple(r.blob() for _ in range(r.u16()))
    return AuthTag(mode=AuthMode(mode), entries=entries)


def _write_request(w: Writer, req: Request):
    w.u32(req.client).u64(req.request_id).blob(req.op)


def _read_request(r: Reader) -> Request:
    return Request(client=r.u32(), request_id=r.u64(), op=r.blob())


def _write_segments(w: Writer, segments: Sequence[NdSegment]):
    w.u8(len(segments))
    for seg in segments:
        w.u8(seg.nd_type).blob(seg.data)


def _read_segments(r: Reader) -> Tuple[NdSegment, ...]:
    out = []
    for _ in range(r.u8()):
        nd_type = r.u8()
        out.append(NdSegment(nd_type=NdType(nd_type), data=r.blob()))
    return tuple(out)


def _write_entry(w: Writer, entry: DecisionEntry):
    w.u32(entry.proposer)
    if entry.value is None:
        w.u8(0)
    else:
        w.u8(1).blob(entry.value)
    w.raw(entry.value_digest)
    _write_auth(w, entry.tag)


def _read_entry(r: Reader) -> DecisionEntry:
    proposer = r.u32()
    value = r.blob() if r.flag() else None
    value_digest = r.raw(DIGEST_SIZE)
    return DecisionEntry(proposer=proposer, value=value, value_digest=value_digest, tag=_read_auth(r))


def _write_entries(w: Writer, entries: Sequence[DecisionEntry]):
    w.u16(len(entries))
    for entry in entries:
        _write_entry(w, entry)


def _read_entries(r: Reader) -> Tuple[DecisionEntry, ...]:
    return tuple(_read_entry(r) for _ in range(r.u16()))


def _write_payload(w: Writer, payload: NdPayload):
    _write_segments(w, payload.segments)
    _write_entries(w, payload.decision)


def _read_payload(r: Reader) -> NdPayload:
    segments = _read_segments(r)
    return NdPayload(segments=segments, decision=_read_entries(r))


def _write_record(w: Writer, record: PostndRecord):
    w.u64(record.seq)
    _write_segments(w, record.values)
    w.raw(record.reply_digest)


def _read_record(r: Reader) -> PostndRecord:
    seq = r.u64()
    values = _read_segments(r)
    return PostndRecord(seq=seq, values=values, reply_digest=r.raw(DIGEST_SIZE))


def _write_records(w: Writer, records: Sequence[PostndRecord]):
    w.u16(len(records))
    for record in records:
        _write_record(w, record)


def _read_records(r: Reader) -> Tuple[PostndRecord, ...]:
    return tuple(_read_record(r) for _ in range(r.u16()))


# -- message bodies ---------------------------------------------------------

def _body_request(w: Writer, m: RequestMessage):
    _write_request(w, m.request)


def _body_pre_prepare(w: Writer, m: PrePrepare):
    _write_request(w, m.request)
    if m.client_auth is None:
        w.u8(0)
    else:
        w.u8(1)
        _write_auth(w, m.client_auth)
    w.u8(m.mask)
    _write_payload(w, m.payload)
    _write_records(w, m.piggyback)


def _body_contrib(w: Writer, m: PpuContrib):
    w.raw(m.request_digest).blob(m.share)
    _write_auth(w, m.share_tag)


def _body_decision(w: Writer, m: PpuDecision):
    w.raw(m.request_digest)
    _write_entries(w, m.entries)


def _body_vote(w: Writer, m):
    w.raw(m.request_digest).raw(m.nd_digest)


def _body_postc_pre_prepare(w: Writer, m: PostcPrePrepare):
    _write_record(w, m.record)


def _body_postc_vote(w: Writer, m):
    w.raw(m.postnd_digest)


def _body_reply(w: Writer, m: Reply):
    w.u32(m.client).u64(m.request_id).u8(m.status).blob(m.result).raw(m.result_digest)


def _body_fetch_nd(w: Writer, m: FetchNd):
    w.raw(m.request_digest).u16(len(m.missing))
    for proposer in m.missing:
        w.u32(proposer)


def _body_nd_values(w: Writer, m: NdValues):
    w.raw(m.request_digest)
    _write_entries(w, m.entries)


def _body_empty(w: Writer, m):
    pass


_BODY_WRITERS: Dict[MessageTag, Callable[[Writer, ProtocolMessage], None]] = {
    MessageTag.REQUEST: _body_request,
    MessageTag.PRE_PREPARE: _body_pre_prepare,
    MessageTag.PPU_CONTRIB: _body_contrib,
    MessageTag.PPU_DECISION: _body_decision,
    MessageTag.PREPARE: _body_vote,
    MessageTag.COMMIT: _body_vote,
    MessageTag.POSTC_PRE_PREPARE: _body_postc_pre_prepare,
    MessageTag.POSTC_PREPARE: _body_postc_vote,
    MessageTag.POSTC_COMMIT: _body_postc_vote,
    MessageTag.REPLY: _body_reply,
    MessageTag.FETCH_ND: _body_fetch_nd,
    MessageTag.ND_VALUES: _body_nd_values,
    MessageTag.FETCH_SLOT: _body_empty,
}


def _read_body(tag: MessageTag, r: Reader) -> dict:
    if tag == MessageTag.REQUEST:
        return {"request": _read_request(r)}
    if tag == MessageTag.PRE_PREPARE:
        request = _read_request(r)
        client_auth = _read_auth(r) if r.flag() else None
        mask = r.u8()
        payload = _read_payload(r)
        return {
            "request": request,
            "client_auth": client_auth,
            "mask": mask,
            "payload": payload,
            "piggyback": _read_records(r),
        }
    if tag == MessageTag.PPU_CONTRIB:
        request_digest = r.raw(DIGEST_SIZE)
        share = r.blob()
        return {"request_digest": request_digest, "share": share, "share_tag": _read_auth(r)}
    if tag in (MessageTag.PPU_DECISION, MessageTag.ND_VALUES):
        request_digest = r.raw(DIGEST_SIZE)
        return {"request_digest": request_digest, "entries": _read_entries(r)}
    if tag in (MessageTag.PREPARE, MessageTag.COMMIT):
        return {"request_digest": r.raw(DIGEST_SIZE), "nd_digest": r.raw(DIGEST_SIZE)}
    if tag == MessageTag.POSTC_PRE_PREPARE:
        return {"record": _read_record(r)}
    if tag in (MessageTag.POSTC_PREPARE, MessageTag.POSTC_COMMIT):
        return {"postnd_digest": r.raw(DIGEST_SIZE)}
    if tag == MessageTag.REPLY:
        client = r.u32()
        request_id = r.u64()
        at = r.pos
        status = r.u8()
        if status not in ReplyStatus._value2member_map_:
            raise DecodeError(at, f"unknown reply status {status}")
        result = r.blob()
        return {
            "client": client,
            "request_id": request_id,
            "status": ReplyStatus(status),
            "result": result,
            "result_digest": r.raw(DIGEST_SIZE),
        }
    if tag == MessageTag.FETCH_ND:
        request_digest = r.raw(DIGEST_SIZE)
        missing = tuple(r.u32() for _ in range(r.u16()))
        return {"request_digest": request_digest, "missing": missing}
    return {}


# -- public API -------------------------------------------------------------

def write_message(w: Writer, msg: ProtocolMessage):
    w.u8(msg.tag).u64(msg.view).u64(msg.seq).u32(msg.sender).u32(msg.epoch)
    _BODY_WRITERS[msg.tag](w, msg)


def encode(msg: ProtocolMessage) -> bytes:
    """Canonical bytes of ``msg``."""
    w = Writer()
    write_message(w, msg)
    return w.bytes()


def read_message(r: Reader) -> AnyMessage:
    start = r.pos
    tag_value = r.u8()
    if tag_value not in MessageTag._value2member_map_:
        raise DecodeError(start, f"unknown message tag {tag_value}")
    tag = MessageTag(tag_value)
    header = {"view": r.u64(), "seq": r.u64(), "sender": r.u32(), "epoch": r.u32()}
    try:
        body = _read_body(tag, r)
        cls: Type[ProtocolMessage] = MESSAGE_TYPES[tag]
        return cls(**header, **body)
    except ValueError as e:
        raise DecodeError(r.pos, f"invalid {tag.name} field: {e}") from e


def decode(data: bytes) -> AnyMessage:
    """Inverse of :func:`encode`; raises DecodeError on malformed input."""
    r = Reader(data)
    msg = read_message(r)
    if r.remaining:
        raise DecodeError(r.pos, f"{r.remaining} trailing bytes")
    return msg


def encode_envelope(msg_bytes: bytes, auth: AuthTag) -> bytes:
    w = Writer().raw(msg_bytes)
    _write_auth(w, auth)
    return w.bytes()


def decode_envelope(data: bytes) -> Tuple[AnyMessage, AuthTag, bytes]:
    """Split an envelope into (message, tag, authenticated message bytes)."""
    r = Reader(data)
    msg = read_message(r)
    msg_end = r.pos
    try:
        auth = _read_auth(r)
    except ValidationError as e:
        raise DecodeError(r.pos, f"invalid auth tag: {e}") from e
    if r.remaining:
        raise DecodeError(r.pos, f"{r.remaining} trailing bytes")
    return msg, auth, bytes(r.data[:msg_end])


def peek_tag(data: bytes) -> Optional[MessageTag]:
    if not data or data[0] not in MessageTag._value2member_map_:
        return None
    return MessageTag(data[0])


def encode_request(request: Request) -> bytes:
    w = Writer()
    _write_request(w, request)
    return w.bytes()


def encode_auth(tag: AuthTag) -> bytes:
    w = Writer()
    _write_auth(w, tag)
    return w.bytes()


def encode_share_statement(
    view: int, seq: int, request_digest: bytes, proposer: int, value_digest: bytes
) -> bytes:
    """Bytes a proposer authenticates for one NPRE share."""
    return (
        Writer().raw(b"PPU-SHARE").u64(view).u64(seq).raw(request_digest)
        .u32(proposer).raw(value_digest).bytes()
    )


def encode_record(record: PostndRecord) -> bytes:
    w = Writer()
    _write_record(w, record)
    return w.bytes()


def encode_nd_data(
    segments: Sequence[NdSegment],
    decision: Sequence[DecisionEntry],
    piggyback: Sequence[PostndRecord] = (),
) -> bytes:
    """
    Canonical bytes certified by a slot's nd digest.

    Decision entries contribute (proposer, value digest, tag) only, so full
    value and digest-only dissemination certify the same bytes.
    """
    w = Writer()
    _write_segments(w, segments)
    _write_entries(w, [e.without_value() for e in decision])
    _write_records(w, piggyback)
    return w.bytes()


def encode_payload(payload: NdPayload) -> bytes:
    """Full nondeterministic data including decision values."""
    w = Writer()
    _write_payload(w, payload)
    return w.bytes()
