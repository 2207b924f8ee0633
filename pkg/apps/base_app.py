import hashlib
import random
import struct
from abc import ABC, abstractmethod
from enum import Enum
from typing import Any, ClassVar, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict

from core.codec import encode_request
from core.crypto import digest
from models.message import Request
from models.payload import NdPayload, NdSegment, NdType
from utils.logging_config import get_logger

logger = get_logger(__name__)

WaitForEdge = Tuple[str, str]


class CheckVerdict(str, Enum):
    ACCEPT = "accept"
    TYPE_MISMATCH = "type_mismatch"
    VALUE_REJECTED = "value_rejected"


class ExecutionResult(BaseModel):
    """Output of one execute upcall."""

    model_config = ConfigDict(frozen=True)

    result: bytes
    recorded: NdPayload = NdPayload()
    cost_us: int = 1


def request_digest(request: Request) -> bytes:
    return digest(encode_request(request))


def expand(seed: bytes, size: int) -> bytes:
    """Deterministic ``size`` bytes derived from ``seed``."""
    return hashlib.shake_256(seed).digest(size)


def npre_combine(shares: Sequence[Tuple[int, bytes]], f: int) -> bytes:
    """
    Combine an NPRE decision set into 32 bytes.

    Args:
        shares: (proposer, share) pairs, in any order
        f: Fault threshold; exactly 2f+1 distinct proposers are required

    Returns:
        SHA-256 over the shares concatenated in ascending proposer order
    """
    if len(shares) != 2 * f + 1:
        raise ValueError(f"decision set has {len(shares)} shares, expected {2 * f + 1}")
    proposers = [p for p, _ in shares]
    if len(set(proposers)) != len(proposers):
        raise ValueError("decision set repeats a proposer")
    return digest(b"".join(value for _, value in sorted(shares, key=lambda s: s[0])))


class ReplicatedApp(ABC):
    """
    Contract between a replicated service and the BFT layer.

    The layer calls ``propose_value`` at the primary (and at backups for NPRE
    shares), ``check_value`` at backups, and ``execute`` once a request is
    ordered and its nondeterministic data resolved. ``snapshot``/``restore``
    back the watchdog restart path.
    """

    name: ClassVar[str] = "base"

    def __init__(
        self,
        replica_id: int,
        secret: bytes,
        f: int = 1,
        nd_value_size: int = 32,
        reply_size: int = 64,
        step_us: int = 1,
        **options: Any,
    ):
        self.replica_id = replica_id
        self.secret = secret
        self.f = f
        self.nd_value_size = nd_value_size
        self.reply_size = reply_size
        self.step_us = step_us
        self.options = options

        self.metrics = {
            "executed": 0,
            "replayed": 0,
            "recorded": 0,
            "rejected": 0,
        }

        logger.debug(
            "app_initialized",
            app=self.name,
            replica_id=replica_id,
            nd_value_size=nd_value_size,
        )

    # -- nondeterminism declaration -------------------------------------

    @abstractmethod
    def nd_type_of(self, op: bytes) -> int:
        """Mask of nondeterminism classes for ``op``; identical at every replica."""
        pass

    def vpre_value(self, view: int, seq: int, request: Request) -> bytes:
        return expand(
            b"vpre|" + struct.pack("<QQ", view, seq) + request_digest(request),
            self.nd_value_size,
        )

    def npre_share(self, request: Request) -> bytes:
        """This replica's share; depends on its local secret, never on seq."""
        return expand(b"npre|" + self.secret + request_digest(request), self.nd_value_size)

    def verify_vpre(self, view: int, seq: int, request: Request, value: bytes) -> bool:
        return value == self.vpre_value(view, seq, request)

    def verify_vpost(self, request: Request, payload: NdPayload) -> bool:
        return True

    # -- upcalls ---------------------------------------------------------

    def validate_operation(self, op: bytes):
        """Raise ApplicationError when ``op`` can never execute."""
        pass

    def propose_value(self, seq: int, request: Request, view: int = 0) -> Tuple[int, NdPayload]:
        self.validate_operation(request.op)
        mask = self.nd_type_of(request.op)
        segments: List[NdSegment] = []
        if mask & NdType.VPRE:
            segments.append(NdSegment(nd_type=NdType.VPRE, data=self.vpre_value(view, seq, request)))
        if mask & NdType.NPRE:
            segments.append(NdSegment(nd_type=NdType.NPRE, data=self.npre_share(request)))
        return mask, NdPayload(segments=tuple(segments))

    def check_value(
        self, seq: int, request: Request, mask: int, payload: NdPayload, view: int = 0
    ) -> CheckVerdict:
        """Validate the primary's declared mask and any verifiable values present."""
        if mask != self.nd_type_of(request.op) or payload.classes & ~mask:
            return CheckVerdict.TYPE_MISMATCH

        if mask & NdType.VPRE:
            value = payload.segment(NdType.VPRE)
            if value is None or not self.verify_vpre(view, seq, request, value):
                self.metrics["rejected"] += 1
                return CheckVerdict.VALUE_REJECTED

        if payload.segment(NdType.VPOST) is not None and not self.verify_vpost(request, payload):
            self.metrics["rejected"] += 1
            return CheckVerdict.VALUE_REJECTED

        return CheckVerdict.ACCEPT

    @abstractmethod
    def execute(self, seq: int, request: Request, resolved: NdPayload, view: int = 0) -> ExecutionResult:
        """
        Run ``request`` against the current state.

        Post-determinable values present in ``resolved`` are replayed;
        absent ones are produced locally and returned as ``recorded``.
        """
        pass

    @abstractmethod
    def snapshot(self) -> bytes:
        pass

    @abstractmethod
    def restore(self, data: bytes):
        pass

    def state_digest(self) -> bytes:
        return digest(self.snapshot())

    # -- helpers for subclasses -------------------------------------------

    def local_rng(self, request: Request, label: bytes) -> random.Random:
        """RNG private to this replica, seeded by its secret and the request."""
        seed = digest(label + b"|" + self.secret + request_digest(request))
        return random.Random(int.from_bytes(seed, "little"))

    @staticmethod
    def shares_of(resolved: NdPayload) -> List[Tuple[int, bytes]]:
        return [(e.proposer, e.value or b"") for e in resolved.decision]

    # -- workload and fault-injection hooks -------------------------------

    @classmethod
    def generate_operation(cls, rng: random.Random, size: int, options: Dict[str, Any]) -> bytes:
        return rng.randbytes(size)

    def wait_for_edges(self, request: Request, resolved: NdPayload) -> Optional[List[WaitForEdge]]:
        """Wait-for edges where replaying ``resolved`` first blocks; None without lock semantics."""
        return None

    def adversarial_values(self, request: Request, recorded: NdPayload) -> NdPayload:
        """Plausible but wrong post-determined values, used by scripted faults."""
        segments = []
        for seg in recorded.segments:
            data = seg.data or b"\x00"
            segments.append(NdSegment(nd_type=seg.nd_type, data=bytes([data[0] ^ 0xFF]) + data[1:]))
        return NdPayload(segments=tuple(segments))

    def forge_deadlock_order(self, request: Request, recorded: NdPayload) -> Optional[NdPayload]:
        return None

    def forge_stalling_order(self, request: Request, recorded: NdPayload) -> Optional[NdPayload]:
        return None


def replay_equivalent(
    app: ReplicatedApp,
    seq: int,
    request: Request,
    resolved: NdPayload,
    original: ExecutionResult,
    original_state: bytes,
) -> bool:
    """
    Replay a primary-role execution on ``app`` and compare the outcome.

    Args:
        app: Application in the state the primary had before executing
        resolved: Pre-determined data the primary executed with
        original: The primary's ExecutionResult, whose ``recorded`` values drive the replay
        original_state: The primary's state digest after executing

    Returns:
        True iff the replay gives a byte-identical result and end-state digest
    """
    replayed = app.execute(seq, request, resolved.with_segments(*original.recorded.segments))
    return replayed.result == original.result and app.state_digest() == original_state
