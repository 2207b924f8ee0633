from enum import Enum
from typing import Dict, List, Optional, Set, Tuple

from pydantic import BaseModel, ConfigDict, Field

from core.quorum import VoteCertificate
from models.message import PrePrepare, Request
from models.auth import AuthTag
from models.payload import DecisionEntry, NdPayload, NdSegment, PostndRecord


class SlotPhase(str, Enum):
    """Ordering phases; a slot only ever moves forward through this list."""
    EMPTY = "empty"
    PRE_PREPARED = "pre_prepared"
    PREPARED = "prepared"
    COMMITTED = "committed"
    ND_PENDING = "nd_pending"
    DELIVERED = "delivered"


PHASE_ORDER = {phase: i for i, phase in enumerate(SlotPhase)}


class SuspicionReason(str, Enum):
    BAD_ORDER = "BAD_ORDER"
    ND_TYPE_MISMATCH = "ND_TYPE_MISMATCH"
    ND_VALUE_REJECTED = "ND_VALUE_REJECTED"
    ND_AGREEMENT_FAILED = "ND_AGREEMENT_FAILED"
    REPLY_DIGEST_MISMATCH = "REPLY_DIGEST_MISMATCH"
    EXEC_CRASH_OR_DEADLOCK = "EXEC_CRASH_OR_DEADLOCK"


class SuspicionEvent(BaseModel):
    """A replica's recorded accusation against the primary."""

    model_config = ConfigDict(frozen=True)

    replica: int
    view: int = 0
    seq: int
    reason: SuspicionReason
    details: bytes = b""
    at_us: int = 0


class OrderingSlot(BaseModel):
    """Per-(view, seq) ordering record at one replica."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    view: int
    seq: int
    owner: int
    created_at: int = 0
    request: Optional[Request] = None
    request_digest: Optional[bytes] = None
    mask: int = 0
    nd_digest: Optional[bytes] = None
    phase: SlotPhase = SlotPhase.EMPTY
    pre_prepare: Optional[PrePrepare] = None
    # nondeterministic data used at execution (pre segments, resolved shares, agreed post values)
    resolved: Optional[NdPayload] = None
    prepares: VoteCertificate = None  # type: ignore[assignment]
    commits: VoteCertificate = None  # type: ignore[assignment]
    prepare_sent: bool = False
    commit_sent: bool = False
    rejected: bool = False
    failed: bool = False
    retransmit_at: int = 0
    suspect_at: Optional[int] = None

    def model_post_init(self, __context) -> None:
        if self.prepares is None:
            self.prepares = VoteCertificate(self.owner)
        if self.commits is None:
            self.commits = VoteCertificate(self.owner)

    @property
    def vote_key(self) -> Optional[Tuple[bytes, bytes]]:
        if self.request_digest is None or self.nd_digest is None:
            return None
        return (self.request_digest, self.nd_digest)

    def advance(self, phase: SlotPhase) -> bool:
        """Move to ``phase`` if it is ahead of the current one."""
        if PHASE_ORDER[phase] <= PHASE_ORDER[self.phase]:
            return False
        self.phase = phase
        return True

    def reached(self, phase: SlotPhase) -> bool:
        return PHASE_ORDER[self.phase] >= PHASE_ORDER[phase]


class PostndStatus(str, Enum):
    RECORDED = "recorded"
    IN_AGREEMENT = "in_agreement"
    AGREED = "agreed"


class PostndEntry(BaseModel):
    """Post-determined values of one seq plus the primary's reply digest."""

    seq: int
    values: Tuple[NdSegment, ...] = ()
    reply_digest: bytes
    status: PostndStatus = PostndStatus.RECORDED
    # seq of the PRE_PREPARE that carried this entry, when piggybacked
    carrier_seq: Optional[int] = None

    @classmethod
    def from_record(cls, record: PostndRecord, status: PostndStatus) -> "PostndEntry":
        return cls(seq=record.seq, values=record.values, reply_digest=record.reply_digest, status=status)

    @property
    def record(self) -> PostndRecord:
        return PostndRecord(seq=self.seq, values=self.values, reply_digest=self.reply_digest)


class PpuState(BaseModel):
    """Pre-prepare-update bookkeeping for one NPRE seq."""

    seq: int
    request_digest: bytes
    own_share: Optional[bytes] = None
    # proposer -> (share, share digest, tag)
    contributions: Dict[int, Tuple[bytes, bytes, AuthTag]] = Field(default_factory=dict)
    decision: Optional[Tuple[DecisionEntry, ...]] = None
    missing: Set[int] = Field(default_factory=set)
    fetch_sent: bool = False
    resolved: Optional[Tuple[DecisionEntry, ...]] = None

    def valid_proposers(self) -> List[int]:
        return sorted(self.contributions)
