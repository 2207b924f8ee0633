from .auth import Address, AuthMode, AuthTag, Role
from .payload import (
    DIGEST_SIZE,
    DecisionEntry,
    NdPayload,
    NdSegment,
    NdType,
    PostndRecord,
    mask_name,
    parse_mask,
)
from .message import (
    NULL_CLIENT,
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
from .slot import (
    OrderingSlot,
    PostndEntry,
    PostndStatus,
    PpuState,
    SlotPhase,
    SuspicionEvent,
    SuspicionReason,
)
from .session import CallStatus, PendingCall
from .scenario import (
    AppConfig,
    CpuModel,
    DelayModel,
    DropRule,
    FaultBehavior,
    FaultSpec,
    ProtocolConfig,
    Scenario,
    Trigger,
    Workload,
)
from .report import (
    BenchConfig,
    BenchPoint,
    BenchResult,
    DeliveryDigests,
    RunMetrics,
    RunResult,
    SafetyReport,
    SafetyViolation,
)

__all__ = [
    "Address",
    "AuthMode",
    "AuthTag",
    "Role",
    "DIGEST_SIZE",
    "DecisionEntry",
    "NdPayload",
    "NdSegment",
    "NdType",
    "PostndRecord",
    "mask_name",
    "parse_mask",
    "NULL_CLIENT",
    "Commit",
    "FetchNd",
    "FetchSlot",
    "MessageTag",
    "NdValues",
    "PostcCommit",
    "PostcPrepare",
    "PostcPrePrepare",
    "PpuContrib",
    "PpuDecision",
    "Prepare",
    "PrePrepare",
    "ProtocolMessage",
    "Reply",
    "ReplyStatus",
    "Request",
    "RequestMessage",
    "OrderingSlot",
    "PostndEntry",
    "PostndStatus",
    "PpuState",
    "SlotPhase",
    "SuspicionEvent",
    "SuspicionReason",
    "CallStatus",
    "PendingCall",
    "AppConfig",
    "CpuModel",
    "DelayModel",
    "DropRule",
    "FaultBehavior",
    "FaultSpec",
    "ProtocolConfig",
    "Scenario",
    "Trigger",
    "Workload",
    "BenchConfig",
    "BenchPoint",
    "BenchResult",
    "DeliveryDigests",
    "RunMetrics",
    "RunResult",
    "SafetyReport",
    "SafetyViolation",
]
