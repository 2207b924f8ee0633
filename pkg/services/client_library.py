from typing import List, Optional, Sequence

from core.codec import decode_envelope, encode, encode_envelope
from core.crypto import KeyRing, authenticate, digest, verify
from core.errors import CallTimeout, DecodeError, NdBftError, RequestRejected
from core.quorum import primary_of, replica_count, reply_quorum
from models.auth import Address, AuthMode
from models.message import MessageTag, Reply, ReplyStatus, Request, RequestMessage
from models.scenario import ProtocolConfig
from models.session import CallStatus, PendingCall
from services.outbox import Outbox
from utils.logging_config import get_logger

logger = get_logger(__name__)

# Retransmission interval doubles per attempt up to this multiple.
MAX_BACKOFF = 16


class BftClient:
    """
    Closed-loop client endpoint.

    Sends each request to the primary, broadcasts it to every replica when
    the retransmission timer expires, and accepts a result once f+1 distinct
    replicas reply with matching digests. The workload stops after the first
    timed-out call; a rejected call is recorded and the next operation follows.
    """

    def __init__(
        self,
        client_id: int,
        f: int,
        keyring: KeyRing,
        config: Optional[ProtocolConfig] = None,
        think_time_us: int = 0,
    ):
        self.id = client_id
        self.f = f
        self.n = replica_count(f)
        self.address = Address.client(client_id)
        self.keyring = keyring
        self.config = config or ProtocolConfig()
        self.auth_mode = AuthMode.SIGNATURE if self.config.auth_mode == "signature" else AuthMode.AUTHENTICATOR
        self.think_time_us = think_time_us

        self.view = 0
        self.next_request_id = 1
        self.call: Optional[PendingCall] = None
        self.finished: List[PendingCall] = []
        self.workload: List[bytes] = []
        self.stopped = False

    @property
    def done(self) -> bool:
        return self.call is None and (self.stopped or not self.workload)

    @property
    def primary(self) -> Address:
        return Address.replica(primary_of(self.view, self.n))

    def start(self, operations: Sequence[bytes], now: int) -> Outbox:
        """Queue ``operations`` and issue the first one."""
        self.workload = list(operations)
        return self._next(now)

    def _next(self, now: int) -> Outbox:
        if self.stopped or not self.workload:
            return Outbox()
        return self.invoke(self.workload.pop(0), now)

    def invoke(self, op: bytes, now: int) -> Outbox:
        """
        Submit ``op`` as the single outstanding request.

        Raises:
            NdBftError: If a call is already pending
        """
        if self.call is not None:
            raise NdBftError(f"client {self.id} already has request {self.call.request_id} outstanding")

        request = Request(client=self.id, request_id=self.next_request_id, op=op)
        self.next_request_id += 1
        self.call = PendingCall(
            request=request,
            sent_at=now,
            deadline_at=now + self.config.client_deadline_us,
            retransmit_at=now + self.config.client_retransmit_us,
        )

        outbox = Outbox()
        outbox.send((self.primary,), self._request_envelope(request), MessageTag.REQUEST)
        outbox.timer("retransmit", self.call.retransmit_at)
        outbox.timer("deadline", self.call.deadline_at)
        return outbox

    def _request_envelope(self, request: Request) -> bytes:
        msg_bytes = encode(RequestMessage(request=request))
        return encode_envelope(msg_bytes, authenticate(self.address, msg_bytes, self.keyring, self.auth_mode))

    def on_timer(self, key: str, now: int) -> Outbox:
        outbox = Outbox()
        call = self.call
        if key == "next":
            return self._next(now)
        if call is None:
            return outbox

        if key == "deadline" and now >= call.deadline_at:
            logger.warning("call_timed_out", client=self.id, request_id=call.request_id, replies=len(call.replies))
            return self._finish(CallStatus.TIMED_OUT, now)

        if key == "retransmit" and now >= call.retransmit_at:
            call.retransmissions += 1
            backoff = min(MAX_BACKOFF, 1 << call.retransmissions)
            call.retransmit_at = now + backoff * self.config.client_retransmit_us
            replicas = tuple(Address.replica(i) for i in range(self.n))
            outbox.send(replicas, self._request_envelope(call.request), MessageTag.REQUEST)
            outbox.timer("retransmit", call.retransmit_at)
            logger.debug("request_retransmitted", client=self.id, request_id=call.request_id)
        return outbox

    def on_message(self, data: bytes, now: int) -> Outbox:
        """Count one REPLY toward the pending call."""
        try:
            msg, auth, msg_bytes = decode_envelope(data)
        except DecodeError as e:
            logger.debug("reply_dropped", client=self.id, reason="undecodable", error=str(e))
            return Outbox()

        call = self.call
        if not isinstance(msg, Reply) or call is None or msg.sender >= self.n:
            return Outbox()
        if msg.client != self.id or msg.request_id != call.request_id:
            return Outbox()
        if not verify(auth, Address.replica(msg.sender), msg_bytes, self.address, self.keyring):
            logger.debug("reply_dropped", client=self.id, reason="authentication", replica=msg.sender)
            return Outbox()

        if msg.status == ReplyStatus.APP_ERROR:
            if Address.replica(msg.sender) == self.primary:
                call.result = msg.result
                return self._finish(CallStatus.REJECTED, now)
            return Outbox()

        if msg.result_digest != digest(msg.result):
            return Outbox()
        call.add_reply(msg.sender, msg.result, msg.result_digest)
        result = call.matching_result(reply_quorum(self.f))
        if result is None:
            return Outbox()
        call.complete(result, now)
        return self._finish(CallStatus.COMPLETED, now)

    def _finish(self, status: CallStatus, now: int) -> Outbox:
        call = self.call
        if status != CallStatus.COMPLETED:
            call.fail(status, now)
            self.stopped = status == CallStatus.TIMED_OUT
        self.finished.append(call)
        self.call = None

        if self.stopped or not self.workload:
            return Outbox()
        if self.think_time_us:
            outbox = Outbox()
            outbox.timer("next", now + self.think_time_us)
            return outbox
        return self._next(now)

    @staticmethod
    def result_of(call: PendingCall) -> bytes:
        """
        Result of a finished call.

        Raises:
            CallTimeout: If the deadline passed without f+1 matching replies
            RequestRejected: If the primary answered with an application error
        """
        if call.status == CallStatus.TIMED_OUT:
            raise CallTimeout(call.request.client, call.request_id)
        if call.status == CallStatus.REJECTED:
            raise RequestRejected(call.request.client, call.request_id, call.result or b"")
        if call.status != CallStatus.COMPLETED:
            raise NdBftError(f"request {call.request_id} is still pending")
        return call.result
