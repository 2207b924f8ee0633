import random
import struct
from typing import Any, Dict, List, Sequence, Tuple

from apps.base_app import ExecutionResult, ReplicatedApp
from core.crypto import digest
from core.errors import ApplicationError
from models.message import Request
from models.payload import NdPayload, NdSegment, NdType

MAX_TASKS = 64

TaskGraph = Tuple[List[int], List[Tuple[int, int]]]


def parse_graph(op: bytes) -> TaskGraph:
    """
    Decode a task DAG.

    Layout: u8 task count | u16 work per task | u8 edge count |
    (u8 from, u8 to) per edge with from < to. Trailing padding is ignored.
    """
    try:
        k = op[0]
        works = list(struct.unpack_from(f"<{k}H", op, 1))
        offset = 1 + 2 * k
        e = op[offset]
        raw = struct.unpack_from(f"<{2 * e}B", op, offset + 1)
    except (IndexError, struct.error) as exc:
        raise ApplicationError(f"malformed task graph: {exc}") from exc
    if not 1 <= k <= MAX_TASKS:
        raise ApplicationError(f"task count {k} out of range")
    edges = [(raw[i], raw[i + 1]) for i in range(0, len(raw), 2)]
    for a, b in edges:
        if not a < b < k:
            raise ApplicationError(f"edge {a}->{b} is not forward")
    return works, edges


def is_topological(order: Sequence[int], k: int, edges: Sequence[Tuple[int, int]]) -> bool:
    if sorted(order) != list(range(k)):
        return False
    position = {task: i for i, task in enumerate(order)}
    return all(position[a] < position[b] for a, b in edges)


class VpostTaskgraphApp(ReplicatedApp):
    """
    Runs a request-supplied task DAG on a simulated worker pool.

    The completion order is chosen by the primary's local scheduler and is
    verifiable by backups (permutation + topological consistency). Result
    layout: chain digest (32) | weighted work u64 | graphs executed u64.
    """

    name = "vpost_taskgraph"

    def __init__(self, replica_id: int, secret: bytes, **kwargs: Any):
        super().__init__(replica_id, secret, **kwargs)
        self.graphs = 0
        self.chain = bytes(32)

    def nd_type_of(self, op: bytes) -> int:
        return NdType.VPOST

    def validate_operation(self, op: bytes):
        parse_graph(op)

    def _schedule(self, request: Request, k: int, edges: Sequence[Tuple[int, int]]) -> List[int]:
        rng = self.local_rng(request, b"taskgraph")
        indegree = [0] * k
        successors: Dict[int, List[int]] = {t: [] for t in range(k)}
        for a, b in edges:
            indegree[b] += 1
            successors[a].append(b)
        ready = [t for t in range(k) if indegree[t] == 0]
        order = []
        while ready:
            task = rng.choice(sorted(ready))
            ready.remove(task)
            order.append(task)
            for nxt in successors[task]:
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    ready.append(nxt)
        return order

    def verify_vpost(self, request: Request, payload: NdPayload) -> bool:
        try:
            works, edges = parse_graph(request.op)
        except ApplicationError:
            return False
        order = payload.segment(NdType.VPOST) or b""
        return is_topological(list(order), len(works), edges)

    def execute(self, seq: int, request: Request, resolved: NdPayload, view: int = 0) -> ExecutionResult:
        works, edges = parse_graph(request.op)
        k = len(works)
        given = resolved.segment(NdType.VPOST)
        if given is None:
            order = self._schedule(request, k, edges)
            recorded = NdPayload(segments=(NdSegment(nd_type=NdType.VPOST, data=bytes(order)),))
            self.metrics["recorded"] += 1
        else:
            order = list(given)
            if not is_topological(order, k, edges):
                raise ApplicationError("completion order violates the task graph")
            recorded = NdPayload()
            self.metrics["replayed"] += 1

        acc = self.chain
        weighted = 0
        for position, task in enumerate(order):
            acc = digest(acc + struct.pack("<BH", task, works[task]))
            weighted += works[task] * (position + 1)
        self.graphs += 1
        self.chain = acc
        self.metrics["executed"] += 1

        return ExecutionResult(
            result=acc + struct.pack("<QQ", weighted, self.graphs),
            recorded=recorded,
            cost_us=max(1, k * self.step_us),
        )

    def snapshot(self) -> bytes:
        return struct.pack("<Q", self.graphs) + self.chain

    def restore(self, data: bytes):
        self.graphs = struct.unpack_from("<Q", data)[0]
        self.chain = data[8:40]

    @classmethod
    def generate_operation(cls, rng: random.Random, size: int, options: Dict[str, Any]) -> bytes:
        k = max(2, min(int(options.get("tasks", 8)), MAX_TASKS))
        density = float(options.get("edge_density", 0.25))
        edges = [(0, 1)]
        for a in range(k):
            for b in range(a + 1, k):
                if (a, b) != (0, 1) and rng.random() < density and len(edges) < 255:
                    edges.append((a, b))
        body = struct.pack("<B", k) + struct.pack(f"<{k}H", *(rng.randrange(1, 1000) for _ in range(k)))
        body += struct.pack("<B", len(edges)) + bytes(x for edge in edges for x in edge)
        if len(body) < size:
            body += bytes(size - len(body))
        return body

    def adversarial_values(self, request: Request, recorded: NdPayload) -> NdPayload:
        order = recorded.segment(NdType.VPOST) or b""
        return NdPayload(segments=(NdSegment(nd_type=NdType.VPOST, data=bytes(reversed(order))),))
