import random
import struct
from typing import Any, Dict, List, Optional, Sequence, Tuple

from apps.base_app import ExecutionResult, ReplicatedApp, WaitForEdge
from core.errors import ApplicationError, ReplayStalled
from models.message import Request
from models.payload import NdPayload, NdSegment, NdType

Op = Tuple[int, int, int]
Event = Tuple[int, int]

_OP = struct.Struct("<BBh")


def parse_program(op: bytes, cells: int) -> List[List[Op]]:
    """
    Decode per-thread transfer programs.

    Layout: u8 threads | u8 ops per thread | (u8 from, u8 to, i16 amount)
    per op, thread-major. Each op locks ``from`` then ``to``.
    """
    try:
        k, m = op[0], op[1]
        programs = []
        offset = 2
        for _ in range(k):
            ops = []
            for _ in range(m):
                ops.append(_OP.unpack_from(op, offset))
                offset += _OP.size
            programs.append(ops)
    except (IndexError, struct.error) as exc:
        raise ApplicationError(f"malformed thread program: {exc}") from exc
    if k == 0:
        raise ApplicationError("program has no threads")
    for ops in programs:
        for a, b, _ in ops:
            if a == b or a >= cells or b >= cells:
                raise ApplicationError(f"invalid cell pair ({a}, {b})")
    return programs


def encode_events(events: Sequence[Event]) -> bytes:
    return bytes(x for event in events for x in event)


def decode_events(data: bytes) -> List[Event]:
    if len(data) % 2:
        raise ReplayStalled(f"lock order has a dangling byte ({len(data)} bytes)")
    return [(data[i], data[i + 1]) for i in range(0, len(data), 2)]


def schedule(programs: List[List[Op]], rng: random.Random) -> List[Event]:
    """
    Interleave thread programs into a global lock-acquisition order.

    A thread starts an op only when both of its cells are free and reserves
    them up front, so the produced order never blocks on replay.
    """
    k = len(programs)
    pc = [0] * k
    mid_op = [False] * k
    reserved: Dict[int, int] = {}
    events: List[Event] = []

    while True:
        runnable = []
        for t in range(k):
            if pc[t] >= len(programs[t]):
                continue
            a, b, _ = programs[t][pc[t]]
            if mid_op[t] or (a not in reserved and b not in reserved):
                runnable.append(t)
        if not runnable:
            return events
        t = rng.choice(runnable)
        a, b, _ = programs[t][pc[t]]
        if not mid_op[t]:
            reserved[a] = reserved[b] = t
            events.append((t, a))
            mid_op[t] = True
        else:
            events.append((t, b))
            del reserved[a], reserved[b]
            mid_op[t] = False
            pc[t] += 1


class NpostCounterApp(ReplicatedApp):
    """
    Shared counters updated by simulated threads.

    The interleaving of the threads is the primary's nondeterminism; it is
    recorded as the global lock-acquisition order and replayed strictly by
    backups. Result: (thread u8, op u8, read from i64, read to i64) per
    completed op in completion order, then every cell as i64.
    """

    name = "npost_counter"

    def __init__(self, replica_id: int, secret: bytes, cells: int = 8, initial: int = 1000, **kwargs: Any):
        super().__init__(replica_id, secret, **kwargs)
        self.cells = [initial] * cells

    def nd_type_of(self, op: bytes) -> int:
        return NdType.NPOST

    def validate_operation(self, op: bytes):
        parse_program(op, len(self.cells))

    def _replay(self, programs: List[List[Op]], events: Sequence[Event]) -> bytes:
        k = len(programs)
        pc = [0] * k
        mid_op = [False] * k
        held: Dict[int, int] = {}
        cells = list(self.cells)
        reads = []

        for t, cell in events:
            if t >= k or pc[t] >= len(programs[t]):
                raise ReplayStalled(f"thread {t} has no pending acquisition")
            a, b, amount = programs[t][pc[t]]
            if cell != (b if mid_op[t] else a):
                raise ReplayStalled(f"thread {t} never acquires cell {cell} next")
            if held.get(cell, t) != t:
                raise ReplayStalled(f"thread {t} blocks on cell {cell} held by thread {held[cell]}")
            held[cell] = t
            if not mid_op[t]:
                mid_op[t] = True
                continue
            reads.append(struct.pack("<BBqq", t, pc[t], cells[a], cells[b]))
            cells[a] -= amount
            cells[b] += amount
            del held[a], held[b]
            mid_op[t] = False
            pc[t] += 1

        if any(pc[t] < len(programs[t]) for t in range(k)):
            raise ReplayStalled("order ends before every thread finished")

        self.cells = cells
        return b"".join(reads) + struct.pack(f"<{len(cells)}q", *cells)

    def execute(self, seq: int, request: Request, resolved: NdPayload, view: int = 0) -> ExecutionResult:
        programs = parse_program(request.op, len(self.cells))
        given = resolved.segment(NdType.NPOST)
        if given is None:
            events = schedule(programs, self.local_rng(request, b"scheduler"))
            recorded = NdPayload(segments=(NdSegment(nd_type=NdType.NPOST, data=encode_events(events)),))
            self.metrics["recorded"] += 1
        else:
            events = decode_events(given)
            recorded = NdPayload()
            self.metrics["replayed"] += 1

        result = self._replay(programs, events)
        self.metrics["executed"] += 1
        return ExecutionResult(result=result, recorded=recorded, cost_us=max(1, len(events) * self.step_us))

    def snapshot(self) -> bytes:
        return struct.pack(f"<I{len(self.cells)}q", len(self.cells), *self.cells)

    def restore(self, data: bytes):
        count = struct.unpack_from("<I", data)[0]
        self.cells = list(struct.unpack_from(f"<{count}q", data, 4))

    def wait_for_edges(self, request: Request, resolved: NdPayload) -> Optional[List[WaitForEdge]]:
        """
        Symbolically replay the order and return the wait-for edges at the
        first acquisition that would block. An order that stalls for any
        other reason yields no edges.
        """
        try:
            programs = parse_program(request.op, len(self.cells))
            events = decode_events(resolved.segment(NdType.NPOST) or b"")
        except ApplicationError:
            return []
        k = len(programs)
        pc = [0] * k
        mid_op = [False] * k
        held: Dict[int, int] = {}

        for index, (t, cell) in enumerate(events):
            if t >= k or pc[t] >= len(programs[t]):
                return []
            a, b, _ = programs[t][pc[t]]
            if cell != (b if mid_op[t] else a):
                return []
            holder = held.get(cell, t)
            if holder != t:
                edges = [(f"T{t}", f"T{holder}")]
                pending: Dict[int, int] = {}
                for u, c in events[index + 1:]:
                    if u != t and u not in pending:
                        pending[u] = c
                for u, c in pending.items():
                    h = held.get(c, u)
                    if h != u:
                        edges.append((f"T{u}", f"T{h}"))
                return edges
            held[cell] = t
            if not mid_op[t]:
                mid_op[t] = True
            else:
                del held[a], held[b]
                mid_op[t] = False
                pc[t] += 1
        return []

    @classmethod
    def generate_operation(cls, rng: random.Random, size: int, options: Dict[str, Any]) -> bytes:
        threads = int(options.get("threads", 4))
        ops_per_thread = int(options.get("ops_per_thread", 16))
        cells = int(options.get("cells", 8))
        body = struct.pack("<BB", threads, ops_per_thread)
        for _ in range(threads * ops_per_thread):
            a, b = rng.sample(range(cells), 2)
            body += _OP.pack(a, b, rng.randrange(-50, 51))
        if len(body) < size:
            body += bytes(size - len(body))
        return body

    def adversarial_values(self, request: Request, recorded: NdPayload) -> NdPayload:
        programs = parse_program(request.op, len(self.cells))
        events = schedule(programs, self.local_rng(request, b"adversary"))
        return NdPayload(segments=(NdSegment(nd_type=NdType.NPOST, data=encode_events(events)),))

    def forge_deadlock_order(self, request: Request, recorded: NdPayload) -> Optional[NdPayload]:
        """Order two threads into opposite-direction transfers over the same cells."""
        programs = parse_program(request.op, len(self.cells))
        candidates = []
        for t, ops_t in enumerate(programs):
            for u, ops_u in enumerate(programs):
                if u <= t:
                    continue
                for i, (a, b, _) in enumerate(ops_t):
                    for j, (c, d, _) in enumerate(ops_u):
                        if (a, b) == (d, c):
                            candidates.append((i + j, t, i, u, j))
        if not candidates:
            return None
        _, t, i, u, j = min(candidates)

        events: List[Event] = []
        for thread, upto in ((t, i), (u, j)):
            for a, b, _ in programs[thread][:upto]:
                events += [(thread, a), (thread, b)]
        x, y, _ = programs[t][i]
        events += [(t, x), (u, y), (t, y), (u, x)]
        return NdPayload(segments=(NdSegment(nd_type=NdType.NPOST, data=encode_events(events)),))

    def forge_stalling_order(self, request: Request, recorded: NdPayload) -> Optional[NdPayload]:
        """Append an acquisition for an already finished thread."""
        programs = parse_program(request.op, len(self.cells))
        events = decode_events(recorded.segment(NdType.NPOST) or b"")
        events.append((0, programs[0][0][0]))
        return NdPayload(segments=(NdSegment(nd_type=NdType.NPOST, data=encode_events(events)),))
