from enum import Enum
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.message import MessageTag

SCHEMA_VERSION = 1


class FaultBehavior(str, Enum):
    """Scripted Byzantine behaviors applied to one replica's outputs."""
    WRONG_VPRE_VALUE = "WRONG_VPRE_VALUE"
    WRONG_ND_TYPE = "WRONG_ND_TYPE"
    EQUIVOCATE_PRE_PREPARE = "EQUIVOCATE_PRE_PREPARE"
    FORGE_PPU_ENTRY = "FORGE_PPU_ENTRY"
    OMIT_PPU_DECISION = "OMIT_PPU_DECISION"
    WRONG_POSTND_VALUES = "WRONG_POSTND_VALUES"
    WRONG_REPLY_DIGEST = "WRONG_REPLY_DIGEST"
    DEADLOCK_ORDER = "DEADLOCK_ORDER"
    CRASH_ORDER = "CRASH_ORDER"
    CRASH_REPLICA = "CRASH_REPLICA"
    CORRUPT_REPLY = "CORRUPT_REPLY"


class Trigger(BaseModel):
    """Seq window (inclusive) and optional virtual time at which a fault is active."""

    model_config = ConfigDict(extra="forbid")

    from_seq: int = Field(default=1, ge=1)
    to_seq: Optional[int] = Field(default=None, ge=1)
    at_us: Optional[int] = Field(default=None, ge=0)

    def covers(self, seq: int) -> bool:
        if seq < self.from_seq:
            return False
        return self.to_seq is None or seq <= self.to_seq


class FaultSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    replica: int = Field(ge=0)
    behavior: FaultBehavior
    trigger: Trigger = Field(default_factory=Trigger)


class DelayModel(BaseModel):
    """Per-link delay: base (+ uniform jitter) plus serialization time per byte."""

    model_config = ConfigDict(extra="forbid")

    kind: Literal["fixed", "uniform"] = "fixed"
    base_us: int = Field(default=100, ge=0)
    jitter_us: int = Field(default=0, ge=0)
    per_byte_us: float = Field(default=0.08, ge=0)


class CpuModel(BaseModel):
    """Per-replica FIFO processing cost."""

    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    recv_us: int = Field(default=15, ge=0)
    send_us: int = Field(default=5, ge=0)
    per_kb_us: float = Field(default=8.0, ge=0)


class DropRule(BaseModel):
    """Drop the next ``count`` messages with ``tag`` from ``src`` to ``dst``."""

    model_config = ConfigDict(extra="forbid")

    src: str
    dst: str
    tag: MessageTag
    count: int = Field(default=1, ge=1)

    @model_validator(mode="before")
    @classmethod
    def tag_by_name(cls, data: Any) -> Any:
        if isinstance(data, dict) and isinstance(data.get("tag"), str):
            data = dict(data)
            data["tag"] = MessageTag[data["tag"].upper()]
        return data


class Workload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    clients: int = Field(default=1, ge=1)
    requests_per_client: int = Field(default=10, ge=0)
    request_size: int = Field(default=64, ge=0)
    reply_size: int = Field(default=64, ge=1)
    nd_value_size: int = Field(default=32, ge=1)
    think_time_us: int = Field(default=0, ge=0)


class AppConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "synthetic"
    options: Dict[str, Any] = Field(default_factory=dict)


class ProtocolConfig(BaseModel):
    """Timers, authentication modes and optimization switches."""

    model_config = ConfigDict(extra="forbid")

    horizon: int = Field(default=256, ge=1)
    flush_timer_us: int = Field(default=10_000, ge=1)
    execution_budget_us: int = Field(default=100_000, ge=1)
    retransmit_interval_us: int = Field(default=20_000, ge=1)
    suspicion_timeout_us: int = Field(default=100_000, ge=1)
    client_retransmit_us: int = Field(default=50_000, ge=1)
    client_deadline_us: int = Field(default=5_000_000, ge=1)
    auth_mode: Literal["authenticator", "signature"] = "authenticator"
    share_auth_mode: Literal["authenticator", "signature"] = "signature"
    digest_dissemination: bool = True
    piggyback: bool = True
    drain_us: int = Field(default=200_000, ge=0)
    max_time_us: int = Field(default=600_000_000, ge=1)

    def with_optimizations(self, enabled: bool) -> "ProtocolConfig":
        return self.model_copy(update={"digest_dissemination": enabled, "piggyback": enabled})


class Scenario(BaseModel):
    """A complete, reproducible simulation setup."""

    model_config = ConfigDict(extra="forbid")

    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "unnamed"
    description: str = ""
    f: int = Field(default=1, ge=0, le=10)
    app: AppConfig = Field(default_factory=AppConfig)
    workload: Workload = Field(default_factory=Workload)
    delay: DelayModel = Field(default_factory=DelayModel)
    cpu: CpuModel = Field(default_factory=CpuModel)
    loss: float = Field(default=0.0, ge=0.0, le=1.0)
    drops: List[DropRule] = Field(default_factory=list)
    faults: List[FaultSpec] = Field(default_factory=list)
    protocol: ProtocolConfig = Field(default_factory=ProtocolConfig)

    @property
    def n(self) -> int:
        return 3 * self.f + 1

    @property
    def faulty_replicas(self) -> List[int]:
        return sorted({fault.replica for fault in self.faults})

    @model_validator(mode="after")
    def fault_budget(self) -> "Scenario":
        for fault in self.faults:
            if fault.replica >= self.n:
                raise ValueError(f"fault script names replica {fault.replica} but n={self.n}")
        if len(self.faulty_replicas) > self.f:
            raise ValueError(
                f"{len(self.faulty_replicas)} replicas carry fault scripts, at most f={self.f} allowed"
            )
        return self
