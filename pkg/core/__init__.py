from .codec import decode, decode_envelope, encode, encode_envelope, encode_request
from .crypto import KeyRing, authenticate, digest, verify
from .errors import (
    ApplicationError,
    CallTimeout,
    ConfigurationError,
    DecodeError,
    ExecutionBudgetExceeded,
    InvalidMaskError,
    MissingKeyError,
    NdBftError,
    ReplayStalled,
    RequestRejected,
    TraceError,
    UsageError,
)
from .quorum import (
    VoteCertificate,
    commit_quorum,
    decision_size,
    prepare_quorum,
    primary_of,
    replica_count,
    reply_quorum,
)

__all__ = [
    "decode",
    "decode_envelope",
    "encode",
    "encode_envelope",
    "encode_request",
    "KeyRing",
    "authenticate",
    "digest",
    "verify",
    "ApplicationError",
    "CallTimeout",
    "ConfigurationError",
    "DecodeError",
    "ExecutionBudgetExceeded",
    "InvalidMaskError",
    "MissingKeyError",
    "NdBftError",
    "ReplayStalled",
    "RequestRejected",
    "TraceError",
    "UsageError",
    "VoteCertificate",
    "commit_quorum",
    "decision_size",
    "prepare_quorum",
    "primary_of",
    "replica_count",
    "reply_quorum",
]
