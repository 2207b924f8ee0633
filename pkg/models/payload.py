from enum import IntFlag
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.auth import AuthTag

DIGEST_SIZE = 32
RESERVED_BITS = 0xF0


class NdType(IntFlag):
    """Nondeterminism classes; a request's mask is any combination."""
    VPRE = 0x01
    NPRE = 0x02
    VPOST = 0x04
    NPOST = 0x08


PRE_DETERMINABLE = NdType.VPRE | NdType.NPRE
POST_DETERMINABLE = NdType.VPOST | NdType.NPOST
SINGLE_CLASSES = (NdType.VPRE, NdType.NPRE, NdType.VPOST, NdType.NPOST)


def mask_name(mask: int) -> str:
    """Render a mask as ``VPRE|NPOST`` (``0`` for deterministic)."""
    if mask == 0:
        return "0"
    return "|".join(c.name for c in SINGLE_CLASSES if mask & c)


def parse_mask(text: str) -> int:
    """Inverse of :func:`mask_name`; accepts names, ``0`` or an integer literal."""
    text = text.strip().upper()
    if not text:
        raise ValueError("empty mask")
    if text.isdigit() or text.startswith("0X"):
        value = int(text, 0)
    else:
        value = 0
        for part in text.split("|"):
            part = part.strip()
            if part == "0":
                continue
            if part not in NdType.__members__:
                raise ValueError(f"unknown nondeterminism class {part!r}")
            value |= NdType[part]
    if value & RESERVED_BITS or value > 0xFF:
        raise ValueError(f"reserved mask bits set in {text!r}")
    return int(value)


class NdSegment(BaseModel):
    """Nondeterministic bytes for exactly one class."""

    model_config = ConfigDict(frozen=True)

    nd_type: NdType
    data: bytes

    @field_validator("nd_type")
    @classmethod
    def single_class(cls, v: NdType) -> NdType:
        if v not in SINGLE_CLASSES:
            raise ValueError("segment must name a single nondeterminism class")
        return v


class DecisionEntry(BaseModel):
    """One proposer's share inside an NPRE decision set."""

    model_config = ConfigDict(frozen=True)

    proposer: int = Field(ge=0, le=0xFFFFFFFF)
    value: Optional[bytes] = None
    value_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)
    tag: AuthTag

    def without_value(self) -> "DecisionEntry":
        return self.model_copy(update={"value": None})


class NdPayload(BaseModel):
    """
    Nondeterministic data attached to one request.

    Segments are kept sorted by class bit so equal payloads encode
    identically; ``decision`` holds the NPRE share set when one exists.
    """

    model_config = ConfigDict(frozen=True)

    segments: Tuple[NdSegment, ...] = ()
    decision: Tuple[DecisionEntry, ...] = ()

    @field_validator("segments")
    @classmethod
    def one_segment_per_class(cls, v: Tuple[NdSegment, ...]) -> Tuple[NdSegment, ...]:
        seen = set()
        for seg in v:
            if seg.nd_type in seen:
                raise ValueError(f"duplicate {seg.nd_type.name} segment")
            seen.add(seg.nd_type)
        return tuple(sorted(v, key=lambda s: int(s.nd_type)))

    @model_validator(mode="after")
    def distinct_proposers(self) -> "NdPayload":
        proposers = [e.proposer for e in self.decision]
        if len(set(proposers)) != len(proposers):
            raise ValueError("decision set repeats a proposer")
        return self

    @property
    def classes(self) -> int:
        mask = 0
        for seg in self.segments:
            mask |= seg.nd_type
        return int(mask)

    def segment(self, nd_type: NdType) -> Optional[bytes]:
        for seg in self.segments:
            if seg.nd_type == nd_type:
                return seg.data
        return None

    def with_segments(self, *segments: NdSegment) -> "NdPayload":
        """Return a copy with ``segments`` added or replacing same-class ones."""
        replaced = {s.nd_type for s in segments}
        kept = tuple(s for s in self.segments if s.nd_type not in replaced)
        return NdPayload(segments=kept + tuple(segments), decision=self.decision)

    def restricted_to(self, mask: int) -> "NdPayload":
        return NdPayload(
            segments=tuple(s for s in self.segments if s.nd_type & mask),
            decision=self.decision,
        )

    @property
    def size(self) -> int:
        total = sum(len(s.data) for s in self.segments)
        total += sum(len(e.value or b"") for e in self.decision)
        return total


class PostndRecord(BaseModel):
    """Wire form of a postnd log entry: recorded values plus the reply digest."""

    model_config = ConfigDict(frozen=True)

    seq: int = Field(ge=1, le=0xFFFFFFFFFFFFFFFF)
    values: Tuple[NdSegment, ...] = ()
    reply_digest: bytes = Field(min_length=DIGEST_SIZE, max_length=DIGEST_SIZE)

    @field_validator("values")
    @classmethod
    def post_classes_only(cls, v: Tuple[NdSegment, ...]) -> Tuple[NdSegment, ...]:
        if any(not seg.nd_type & POST_DETERMINABLE for seg in v):
            raise ValueError("postnd records carry post-determinable classes only")
        return NdPayload(segments=v).segments

    @property
    def payload(self) -> NdPayload:
        return NdPayload(segments=self.values)
