import random
from typing import Any, Dict, List, Optional

from apps.base_app import ExecutionResult, ReplicatedApp, WaitForEdge
from apps.npost_counter_app import NpostCounterApp
from apps.npre_lottery_app import NpreLotteryApp
from models.message import Request
from models.payload import NdPayload, NdType

LOTTERY_SNAPSHOT_SIZE = 48


class CompositeApp(ReplicatedApp):
    """
    Lottery draw plus counter transfers in one request (mask NPRE|NPOST).

    The op is an npost_counter program; the result is the lottery result
    followed by the counter result.
    """

    name = "composite_demo"

    def __init__(self, replica_id: int, secret: bytes, cells: int = 8, **kwargs: Any):
        super().__init__(replica_id, secret, **kwargs)
        self.lottery = NpreLotteryApp(replica_id, secret, **kwargs)
        self.counter = NpostCounterApp(replica_id, secret, cells=cells, **kwargs)

    def nd_type_of(self, op: bytes) -> int:
        return NdType.NPRE | NdType.NPOST

    def validate_operation(self, op: bytes):
        self.counter.validate_operation(op)

    def execute(self, seq: int, request: Request, resolved: NdPayload, view: int = 0) -> ExecutionResult:
        # run the counter first so a failed replay leaves the lottery untouched
        counted = self.counter.execute(seq, request, resolved, view)
        drawn = self.lottery.execute(seq, request, resolved, view)
        self.metrics["executed"] += 1
        return ExecutionResult(
            result=drawn.result + counted.result,
            recorded=counted.recorded,
            cost_us=drawn.cost_us + counted.cost_us,
        )

    def snapshot(self) -> bytes:
        return self.lottery.snapshot() + self.counter.snapshot()

    def restore(self, data: bytes):
        self.lottery.restore(data[:LOTTERY_SNAPSHOT_SIZE])
        self.counter.restore(data[LOTTERY_SNAPSHOT_SIZE:])

    def wait_for_edges(self, request: Request, resolved: NdPayload) -> Optional[List[WaitForEdge]]:
        return self.counter.wait_for_edges(request, resolved)

    @classmethod
    def generate_operation(cls, rng: random.Random, size: int, options: Dict[str, Any]) -> bytes:
        return NpostCounterApp.generate_operation(rng, size, options)

    def adversarial_values(self, request: Request, recorded: NdPayload) -> NdPayload:
        return self.counter.adversarial_values(request, recorded)

    def forge_deadlock_order(self, request: Request, recorded: NdPayload) -> Optional[NdPayload]:
        return self.counter.forge_deadlock_order(request, recorded)

    def forge_stalling_order(self, request: Request, recorded: NdPayload) -> Optional[NdPayload]:
        return self.counter.forge_stalling_order(request, recorded)
