import struct
from typing import Any

from apps.base_app import ExecutionResult, ReplicatedApp, expand
from core.crypto import digest
from models.message import Request
from models.payload import NdPayload, NdType


class VpreRandApp(ReplicatedApp):
    """
    Verifiable random draws.

    Each draw mixes H(view, seq, request digest), which every backup can
    recompute. Result: 32-byte draw followed by the running draw count,
    expanded to the configured reply size.
    """

    name = "vpre_rand"

    def __init__(self, replica_id: int, secret: bytes, exec_us: int = 5, **kwargs: Any):
        super().__init__(replica_id, secret, **kwargs)
        self.exec_us = exec_us
        self.draws = 0
        self.chain = bytes(32)

    def nd_type_of(self, op: bytes) -> int:
        return NdType.VPRE

    def execute(self, seq: int, request: Request, resolved: NdPayload, view: int = 0) -> ExecutionResult:
        value = resolved.segment(NdType.VPRE) or b""
        self.draws += 1
        self.chain = digest(self.chain + value + request.op)
        draw = digest(self.chain + struct.pack("<Q", self.draws))
        result = draw + struct.pack("<Q", self.draws)
        if self.reply_size > len(result):
            result += expand(draw, self.reply_size - len(result))
        self.metrics["executed"] += 1
        return ExecutionResult(result=result, cost_us=self.exec_us)

    def snapshot(self) -> bytes:
        return struct.pack("<Q", self.draws) + self.chain

    def restore(self, data: bytes):
        self.draws = struct.unpack_from("<Q", data)[0]
        self.chain = data[8:40]
