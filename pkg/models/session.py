from enum import Enum
from typing import Dict, Optional

from pydantic import BaseModel, Field

from models.message import Request


class CallStatus(str, Enum):
    """Lifecycle of one client invocation."""
    PENDING = "pending"
    COMPLETED = "completed"
    TIMED_OUT = "timed_out"
    REJECTED = "rejected"


class PendingCall(BaseModel):
    """The single outstanding request of a closed-loop client."""

    request: Request
    sent_at: int
    deadline_at: int
    retransmit_at: int
    retransmissions: int = 0
    status: CallStatus = CallStatus.PENDING
    # replica -> result digest; first reply of each replica wins
    replies: Dict[int, bytes] = Field(default_factory=dict)
    results: Dict[bytes, bytes] = Field(default_factory=dict)
    result: Optional[bytes] = None
    completed_at: Optional[int] = None

    @property
    def request_id(self) -> int:
        return self.request.request_id

    def add_reply(self, replica: int, result: bytes, result_digest: bytes) -> bool:
        if replica in self.replies:
            return False
        self.replies[replica] = result_digest
        self.results.setdefault(result_digest, result)
        return True

    def matching_result(self, quorum: int) -> Optional[bytes]:
        """Result backed by ``quorum`` distinct replicas, if any."""
        counts: Dict[bytes, int] = {}
        for result_digest in self.replies.values():
            counts[result_digest] = counts.get(result_digest, 0) + 1
            if counts[result_digest] >= quorum:
                return self.results[result_digest]
        return None

    def complete(self, result: bytes, now: int):
        self.status = CallStatus.COMPLETED
        self.result = result
        self.completed_at = now

    def fail(self, status: CallStatus, now: int):
        self.status = status
        self.completed_at = now

    @property
    def latency_us(self) -> Optional[int]:
        if self.completed_at is None:
            return None
        return self.completed_at - self.sent_at

    def to_summary(self) -> dict:
        return {
            "client": self.request.client,
            "request_id": self.request_id,
            "status": self.status.value,
            "latency_us": self.latency_us,
            "retransmissions": self.retransmissions,
            "replies": len(self.replies),
        }
