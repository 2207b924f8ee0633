from enum import IntEnum
from typing import ClassVar, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from models.auth import AuthTag
from models.payload import DIGEST_SIZE, DecisionEntry, NdPayload, PostndRecord

U32 = 0xFFFFFFFF
U64 = 0xFFFFFFFFFFFFFFFF

# Reserved client id occupied by null requests.
NULL_CLIENT = U32


class MessageTag(IntEnum):
    """Wire tag byte of every protocol message."""
    REQUEST = 1
    PRE_PREPARE = 2
    PPU_CONTRIB = 3
    PPU_DECISION = 4
    PREPARE = 5
    COMMIT = 6
    POSTC_PRE_PREPARE = 7
    POSTC_PREPARE = 8
    POSTC_COMMIT = 9
    REPLY = 10
    FETCH_ND = 11
    ND_VALUES = 12
    FETCH_SLOT = 13


class ReplyStatus(IntEnum):
    OK = 0
    APP_ERROR = 1


class Request(BaseModel):
    """A client operation; the null request fills a seq with no client work."""

    model_config = ConfigDict(frozen=True)

    client: int = Field(ge=0, le=U32)
    request_id: int = Field(ge=0, le=U64)
    op: bytes = b""

    @classmethod
    def null(cls, seq: int) -> "Request":
        return cls(client=NULL_CLIENT, request_id=seq, op=b"")

    @property
    def is_null(self) -> bool:
        return self.client == NULL_CLIENT


class ProtocolMessage(BaseModel):
    """Common header: view, seq, sender and the sender's incarnation epoch."""

    model_config = ConfigDict(frozen=True)

    tag: ClassVar[MessageTag]

    view: int = Field(default=0, ge=0, le=U64)
    seq: int = Field(default=0, ge=0, le=U64)
    sender: int = Field(default=0, ge=0, le=U32)
    epoch: int = Field(default=0, ge=0, le=U32)


class RequestMessage(ProtocolMessage):
    tag: ClassVar[MessageTag] = MessageTag.REQUEST

    request: Request


class PrePrepare(ProtocolMessage):
    """
    Ordering proposal for ``seq``.

    Carries the full client request with the client's authentication, the
    nondeterminism mask, pre-determined values and any postnd records
    piggybacked from earlier post-determinable requests.
    """

    tag: ClassVar[MessageTag] = MessageTag.PRE_PREPARE

    request: Request
    client_auth: Optional[AuthTag] = None
    mask: int = Field(default=0, ge=0, le=0x0F)
    payload: NdPayload = NdPayload()
    piggyback: Tuple[PostndRecord, ...] = ()


class PpuContrib(ProtocolMessage):
    tag: ClassVar[MessageTag] = MessageTag.PPU_CONTRIB

    request_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)
    share: bytes
    share_tag: AuthTag


class PpuDecision(ProtocolMessage):
    tag: ClassVar[MessageTag] = MessageTag.PPU_DECISION

    request_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)
    entries: Tuple[DecisionEntry, ...]


class Prepare(ProtocolMessage):
    tag: ClassVar[MessageTag] = MessageTag.PREPARE

    request_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)
    nd_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)


class Commit(ProtocolMessage):
    tag: ClassVar[MessageTag] = MessageTag.COMMIT

    request_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)
    nd_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)


class PostcPrePrepare(ProtocolMessage):
    """Standalone post-commit proposal; ``seq`` is the seq under agreement."""

    tag: ClassVar[MessageTag] = MessageTag.POSTC_PRE_PREPARE

    record: PostndRecord


class PostcPrepare(ProtocolMessage):
    tag: ClassVar[MessageTag] = MessageTag.POSTC_PREPARE

    postnd_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)


class PostcCommit(ProtocolMessage):
    tag: ClassVar[MessageTag] = MessageTag.POSTC_COMMIT

    postnd_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)


class Reply(ProtocolMessage):
    tag: ClassVar[MessageTag] = MessageTag.REPLY

    client: int = Field(ge=0, le=U32)
    request_id: int = Field(ge=0, le=U64)
    status: ReplyStatus = ReplyStatus.OK
    result: bytes = b""
    result_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)


class FetchNd(ProtocolMessage):
    tag: ClassVar[MessageTag] = MessageTag.FETCH_ND

    request_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)
    missing: Tuple[int, ...]


class NdValues(ProtocolMessage):
    tag: ClassVar[MessageTag] = MessageTag.ND_VALUES

    request_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)
    entries: Tuple[DecisionEntry, ...]


class FetchSlot(ProtocolMessage):
    """Ask peers to re-send what they sent for ``seq``."""

    tag: ClassVar[MessageTag] = MessageTag.FETCH_SLOT


AnyMessage = Union[
    RequestMessage,
    PrePrepare,
    PpuContrib,
    PpuDecision,
    Prepare,
    Commit,
    PostcPrePrepare,
    PostcPrepare,
    PostcCommit,
    Reply,
    FetchNd,
    NdValues,
    FetchSlot,
]

MESSAGE_TYPES = {
    cls.tag: cls
    for cls in (
        RequestMessage,
        PrePrepare,
        PpuContrib,
        PpuDecision,
        Prepare,
        Commit,
        PostcPrePrepare,
        PostcPrepare,
        PostcCommit,
        Reply,
        FetchNd,
        NdValues,
        FetchSlot,
    )
}
