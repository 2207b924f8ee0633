import heapq
import struct
from collections import deque
from typing import Any, Dict, List, Optional

import pytest

from apps import create_app
from core.codec import encode, encode_envelope
from core.crypto import KeyRing, authenticate, digest
from models.auth import Address, AuthMode
from models.message import ProtocolMessage, Request, RequestMessage
from models.scenario import ProtocolConfig
from services.client_library import BftClient
from services.outbox import Outbox
from services.replica_engine import Replica
from simnet.trace import TraceRecorder
from utils.logging_config import setup_logging


@pytest.fixture(autouse=True, scope="session")
def quiet_logging():
    setup_logging(log_level="WARNING", json_logs=False)


def seal(keyring: KeyRing, sender: Address, msg: ProtocolMessage, mode: AuthMode = AuthMode.AUTHENTICATOR) -> bytes:
    """Envelope ``msg`` as ``sender`` would put it on the wire."""
    msg_bytes = encode(msg)
    return encode_envelope(msg_bytes, authenticate(sender, msg_bytes, keyring, mode))


def client_request(keyring: KeyRing, client: int, request_id: int, op: bytes) -> bytes:
    return seal(keyring, Address.client(client), RequestMessage(request=Request(client=client, request_id=request_id, op=op)))


class LocalCluster:
    """
    In-process replicas and clients wired by a zero-latency FIFO network.

    Messages are handed over in send order; timers fire in time order once
    the network is idle. ``intercept`` may drop or rewrite envelopes.
    """

    def __init__(
        self,
        f: int = 1,
        app: str = "synthetic",
        clients: int = 1,
        config: Optional[ProtocolConfig] = None,
        **options: Any,
    ):
        self.f = f
        self.n = 3 * f + 1
        self.config = config or ProtocolConfig()
        self.keyring = KeyRing(b"local-cluster", self.n, clients)
        self.trace = TraceRecorder()
        self.now = 0
        self.endpoints: Dict[Address, Any] = {}
        self.replicas: List[Replica] = []
        for i in range(self.n):
            application = create_app(app, i, digest(b"secret" + struct.pack("<I", i)), f=f, **options)
            replica = Replica(i, f, application, self.keyring, self.config, recorder=self.trace)
            self.replicas.append(replica)
            self.endpoints[replica.address] = replica
        self.clients: List[BftClient] = []
        for c in range(clients):
            client = BftClient(c, f, self.keyring, self.config)
            self.clients.append(client)
            self.endpoints[client.address] = client
        self.queue = deque()
        self.timers: List = []
        self._counter = 0
        self.sent: List = []
        self.intercept = None

    def absorb(self, source: Address, outbox: Outbox):
        for out in outbox.messages:
            for dst in out.destinations:
                self.sent.append((source, dst, out.tag))
                self.queue.append((source, dst, out.data))
        for timer in outbox.timers:
            heapq.heappush(self.timers, (timer.fire_at, self._counter, source, timer.key))
            self._counter += 1

    def pump(self, limit: int = 200_000):
        steps = 0
        while self.queue:
            source, dst, data = self.queue.popleft()
            if self.intercept is not None:
                data = self.intercept(source, dst, data)
                if data is None:
                    continue
            endpoint = self.endpoints.get(dst)
            if endpoint is None:
                continue
            self.absorb(dst, endpoint.on_message(data, self.now))
            steps += 1
            assert steps < limit, "message storm"

    def fire_next_timer(self) -> bool:
        if not self.timers:
            return False
        fire_at, _, target, key = heapq.heappop(self.timers)
        self.now = max(self.now, fire_at)
        self.absorb(target, self.endpoints[target].on_timer(key, self.now))
        return True

    def run(self, until_us: int = 10_000_000):
        """Pump messages and fire timers until idle or ``until_us``."""
        self.pump()
        while self.timers and self.timers[0][0] <= until_us:
            self.fire_next_timer()
            self.pump()

    def inject(self, source: Address, data: bytes, to: Address):
        self.queue.append((source, to, data))

    def start_clients(self, operations: Dict[int, List[bytes]]):
        for c, ops in operations.items():
            self.absorb(self.clients[c].address, self.clients[c].start(ops, self.now))

    def delivered(self, replica: int) -> List[dict]:
        return [e for e in self.trace.of_kind("delivered") if e["replica"] == replica]

    def suspicions(self, replica: Optional[int] = None) -> List[dict]:
        return [e for e in self.trace.of_kind("suspicion") if replica is None or e["replica"] == replica]


@pytest.fixture
def keyring() -> KeyRing:
    return KeyRing(b"unit-tests", 4, 2)


@pytest.fixture
def cluster_factory():
    return LocalCluster


@pytest.fixture
def sealer():
    return seal


@pytest.fixture
def make_request():
    return client_request
