import heapq
import random
import struct
from enum import Enum
from typing import Any, Dict, Iterable, List, NamedTuple, Optional

from apps import app_class, create_app
from core.crypto import KeyRing, digest
from models.auth import Address
from models.report import RunResult
from models.scenario import Scenario
from models.session import CallStatus
from services.client_library import BftClient
from services.outbox import Outbox, Outbound
from services.replica_engine import Replica
from simnet.byzantine import ByzantineReplica
from simnet.metrics import RunMetricsCollector
from simnet.safety import check_safety
from simnet.trace import TraceRecorder
from utils.logging_config import bind_run_context, clear_run_context, get_logger

logger = get_logger(__name__)


class EventKind(str, Enum):
    DELIVER = "deliver"
    TIMER = "timer"
    INJECT = "inject"


class SimEvent(NamedTuple):
    time_us: int
    counter: int
    kind: EventKind
    target: Address
    payload: Any


class Simulator:
    """
    Deterministic discrete-event run of one scenario.

    Events are processed in (virtual time, insertion counter) order. Each
    replica is a FIFO server: work starts when the previous event finished,
    and its outputs leave when processing ends. Every random choice (link
    jitter, loss, workload) comes from generators seeded by ``seed``.
    """

    def __init__(self, scenario: Scenario, seed: int):
        self.scenario = scenario
        self.seed = seed
        self.n = scenario.n
        seed_bytes = struct.pack("<q", seed)

        self.net_rng = random.Random(digest(b"net|" + seed_bytes))
        self.keyring = KeyRing(seed_bytes, self.n, scenario.workload.clients)
        self.trace = TraceRecorder()
        self.metrics = RunMetricsCollector()
        self.drops = [rule.model_copy() for rule in scenario.drops]

        self.queue: List[SimEvent] = []
        self.counter = 0
        self.busy_until: Dict[Address, int] = {}
        self.endpoints: Dict[Address, Any] = {}
        self.clients: List[BftClient] = []
        self.workloads: Dict[Address, List[bytes]] = {}

        self._build_replicas(seed_bytes)
        self._build_clients(seed_bytes)

    def _build_replicas(self, seed_bytes: bytes):
        s = self.scenario
        for i in range(self.n):
            app = create_app(
                s.app.name, i, digest(b"secret|" + seed_bytes + struct.pack("<I", i)),
                f=s.f, nd_value_size=s.workload.nd_value_size, reply_size=s.workload.reply_size,
                **s.app.options,
            )
            replica = Replica(i, s.f, app, self.keyring, s.protocol, recorder=self.trace)
            faults = [fault for fault in s.faults if fault.replica == i]
            endpoint = ByzantineReplica(replica, faults) if faults else replica
            address = Address.replica(i)
            self.endpoints[address] = endpoint
            self.busy_until[address] = 0

    def _build_clients(self, seed_bytes: bytes):
        s = self.scenario
        generator = app_class(s.app.name)
        for c in range(s.workload.clients):
            client = BftClient(c, s.f, self.keyring, s.protocol, think_time_us=s.workload.think_time_us)
            rng = random.Random(digest(b"workload|" + seed_bytes + struct.pack("<I", c)))
            ops = [
                generator.generate_operation(rng, s.workload.request_size, s.app.options)
                for _ in range(s.workload.requests_per_client)
            ]
            self.clients.append(client)
            self.endpoints[client.address] = client
            self.workloads[client.address] = ops

    # -- scheduling --------------------------------------------------------

    def _push(self, time_us: int, kind: EventKind, target: Address, payload: Any = None):
        heapq.heappush(self.queue, SimEvent(time_us, self.counter, kind, target, payload))
        self.counter += 1

    def _dropped_by_rule(self, src: Address, dst: Address, out: Outbound) -> bool:
        for rule in self.drops:
            if rule.count <= 0 or rule.tag != out.tag:
                continue
            if _matches(rule.src, src) and _matches(rule.dst, dst):
                rule.count -= 1
                return True
        return False

    def _link_delay(self, size: int) -> int:
        delay = self.scenario.delay
        jitter = self.net_rng.randint(0, delay.jitter_us) if delay.kind == "uniform" and delay.jitter_us else 0
        return delay.base_us + jitter + int(size * delay.per_byte_us)

    def _transmit(self, src: Address, out: Outbound, leave_at: int):
        size = len(out.data)
        self.metrics.message_sent(out.tag, size, copies=len(out.destinations))
        for dst in out.destinations:
            if dst not in self.endpoints or self._dropped_by_rule(src, dst, out):
                continue
            if self.scenario.loss and self.net_rng.random() < self.scenario.loss:
                continue
            self._push(leave_at + self._link_delay(size), EventKind.DELIVER, dst, out.data)

    def _cpu_cost(self, event: SimEvent, outbox: Outbox) -> int:
        cpu = self.scenario.cpu
        cost = outbox.cost_us
        if not cpu.enabled:
            return cost
        if event.kind == EventKind.DELIVER:
            cost += cpu.recv_us + cpu.per_kb_us * len(event.payload) / 1024
        for out in outbox.messages:
            cost += cpu.send_us * len(out.destinations) + cpu.per_kb_us * len(out.data) / 1024
        return int(cost)

    def _process(self, event: SimEvent):
        target = event.target
        endpoint = self.endpoints[target]
        is_replica = target.is_replica
        start = max(event.time_us, self.busy_until[target]) if is_replica else event.time_us

        if event.kind == EventKind.DELIVER:
            outbox = endpoint.on_message(event.payload, start)
        elif event.kind == EventKind.TIMER:
            outbox = endpoint.on_timer(event.payload, start)
        else:
            outbox = endpoint.start(self.workloads[target], start)

        done = start + (self._cpu_cost(event, outbox) if is_replica else 0)
        if is_replica:
            self.busy_until[target] = done
        for out in outbox.messages:
            self._transmit(target, out, done)
        for timer in outbox.timers:
            self._push(timer.fire_at, EventKind.TIMER, target, timer.key)

    # -- run ---------------------------------------------------------------

    def run(self, keep_trace: bool = True) -> RunResult:
        """Run to completion and check the resulting trace."""
        s = self.scenario
        bind_run_context(s.name, self.seed)
        logger.info("scenario_started", f=s.f, n=self.n, app=s.app.name, clients=s.workload.clients)

        self.trace.record(
            "run_start", t=0, scenario=s.name, seed=self.seed, f=s.f, n=self.n,
            faulty=s.faulty_replicas, app=s.app.name, clients=s.workload.clients,
            faults=[fault.behavior.value for fault in s.faults],
        )
        for client in self.clients:
            self._push(0, EventKind.INJECT, client.address)

        now = 0
        end_at: Optional[int] = None
        while self.queue:
            event = heapq.heappop(self.queue)
            if event.time_us > s.protocol.max_time_us or (end_at is not None and event.time_us > end_at):
                break
            now = event.time_us
            self._process(event)
            if end_at is None and all(client.done for client in self.clients):
                end_at = now + s.protocol.drain_us

        calls = [call for client in self.clients for call in client.finished]
        completed = sum(1 for call in calls if call.status == CallStatus.COMPLETED)
        self.trace.record(
            "run_end", t=now, completed=completed, failed=len(calls) - completed,
            pending=sum(1 for client in self.clients if client.call is not None),
        )

        report = check_safety(self.trace.events)
        metrics = self.metrics.summarize(calls, self.trace.events, now)
        logger.info(
            "scenario_finished", completed=completed, violations=len(report.violations),
            suspicions=len(report.suspicions), end_us=now,
        )
        clear_run_context()
        return RunResult(
            scenario=s.name,
            seed=self.seed,
            report=report,
            metrics=metrics,
            trace=self.trace.lines() if keep_trace else [],
            calls=[call.to_summary() for call in calls],
            exposition=self.metrics.exposition().decode(),
        )


def _matches(pattern: str, address: Address) -> bool:
    return pattern == "*" or pattern == address.principal


def run(scenario: Scenario, seed: int, keep_trace: bool = True) -> RunResult:
    return Simulator(scenario, seed).run(keep_trace=keep_trace)


def simulate_sweep(scenario: Scenario, seeds: Iterable[int], keep_trace: bool = False) -> List[RunResult]:
    """Independent runs of ``scenario``, one per seed."""
    return [run(scenario, seed, keep_trace=keep_trace) for seed in seeds]
