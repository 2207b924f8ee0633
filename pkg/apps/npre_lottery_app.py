import struct
from typing import Any

from apps.base_app import ExecutionResult, ReplicatedApp, npre_combine
from models.message import Request
from models.payload import NdPayload, NdType

# A draw wins when the first combined byte is below this threshold.
WIN_THRESHOLD = 16


class NpreLotteryApp(ReplicatedApp):
    """
    Lottery whose draws no single replica can predict or steer.

    Each replica contributes a share; the draw is the combination of the
    2f+1 agreed shares. Result layout: combined (32) | won u8 | draws u64 |
    wins u64.
    """

    name = "npre_lottery"

    def __init__(self, replica_id: int, secret: bytes, exec_us: int = 5, **kwargs: Any):
        super().__init__(replica_id, secret, **kwargs)
        self.exec_us = exec_us
        self.draws = 0
        self.wins = 0
        self.last_draw = bytes(32)

    def nd_type_of(self, op: bytes) -> int:
        return NdType.NPRE

    def draw(self, resolved: NdPayload) -> bytes:
        combined = npre_combine(self.shares_of(resolved), self.f)
        self.draws += 1
        won = combined[0] < WIN_THRESHOLD
        if won:
            self.wins += 1
        self.last_draw = combined
        return combined + struct.pack("<BQQ", int(won), self.draws, self.wins)

    def execute(self, seq: int, request: Request, resolved: NdPayload, view: int = 0) -> ExecutionResult:
        result = self.draw(resolved)
        self.metrics["executed"] += 1
        return ExecutionResult(result=result, cost_us=self.exec_us)

    def snapshot(self) -> bytes:
        return struct.pack("<QQ", self.draws, self.wins) + self.last_draw

    def restore(self, data: bytes):
        self.draws, self.wins = struct.unpack_from("<QQ", data)
        self.last_draw = data[16:48]
