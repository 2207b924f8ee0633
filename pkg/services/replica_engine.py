from typing import Dict, List, Optional, Set, Tuple

from apps.base_app import CheckVerdict, ReplicatedApp
from core.codec import decode_envelope, encode, encode_envelope, encode_request
from core.crypto import KeyRing, authenticate, digest, verify
from core.errors import ApplicationError, DecodeError
from core.quorum import commit_quorum, prepare_quorum, primary_of, replica_count
from models.auth import Address, AuthMode, AuthTag
from models.message import (
    Commit,
    FetchNd,
    FetchSlot,
    MessageTag,
    NdValues,
    PostcCommit,
    PostcPrepare,
    PostcPrePrepare,
    PpuContrib,
    PpuDecision,
    Prepare,
    PrePrepare,
    ProtocolMessage,
    Reply,
    ReplyStatus,
    Request,
    RequestMessage,
)
from models.payload import POST_DETERMINABLE, NdPayload
from models.scenario import ProtocolConfig
from models.slot import OrderingSlot, SlotPhase, SuspicionEvent, SuspicionReason
from services.nd_controller import NdController, delivery_digest, nd_digest, plan_phases
from services.outbox import Outbox
from services.watchdog import ExecutionFailure, ExecutionOutcome, Watchdog
from simnet.trace import NullRecorder
from utils.logging_config import get_logger

logger = get_logger(__name__)

# Retransmission backs off by doubling up to this many intervals.
MAX_BACKOFF = 16


class Replica:
    """
    One replica of the nondeterminism-aware BFT engine.

    Event driven: the host feeds raw envelopes to :meth:`on_message` and
    fired timers to :meth:`on_timer`; both return an :class:`Outbox` with
    the bytes to send, timers to arm and the CPU cost of the work done.
    Only the single view 0 is supported.
    """

    def __init__(
        self,
        replica_id: int,
        f: int,
        app: ReplicatedApp,
        keyring: KeyRing,
        config: Optional[ProtocolConfig] = None,
        recorder=None,
    ):
        self.id = replica_id
        self.f = f
        self.n = replica_count(f)
        self.address = Address.replica(replica_id)
        self.app = app
        self.keyring = keyring
        self.config = config or ProtocolConfig()
        self.recorder = recorder or NullRecorder()
        self.auth_mode = AuthMode.SIGNATURE if self.config.auth_mode == "signature" else AuthMode.AUTHENTICATOR

        self.view = 0
        self.epoch = 0
        self.now = 0
        self.outbox = Outbox()

        self.slots: Dict[int, OrderingSlot] = {}
        self.last_delivered = 0
        self.next_seq = 1
        self.ordered: Dict[Tuple[int, int], int] = {}
        self.last_reply: Dict[int, Tuple[int, bytes]] = {}
        self.standby: Optional[Tuple[Request, Optional[AuthTag], Tuple[int, int]]] = None

        self.sent_log: Dict[int, List[Tuple[Tuple[Address, ...], bytes]]] = {}
        self.carrier_of: Dict[int, int] = {}

        self.suspicions: List[SuspicionEvent] = []
        self._suspected: Set[Tuple[int, SuspicionReason]] = set()
        self._tick_at: Optional[int] = None
        self._last_resend: Dict[int, int] = {}

        self.nd = NdController(self)
        self.watchdog = Watchdog(self.config.execution_budget_us)
        self.snapshot = app.snapshot()

        self.stats = {"received": 0, "dropped": 0, "delivered": 0, "null_requests": 0}

    # -- identity ----------------------------------------------------------

    @property
    def primary(self) -> int:
        return primary_of(self.view, self.n)

    @property
    def is_primary(self) -> bool:
        return self.id == self.primary

    @property
    def peers(self) -> Tuple[Address, ...]:
        return tuple(Address.replica(i) for i in range(self.n) if i != self.id)

    def record(self, kind: str, **fields):
        self.recorder.record(kind, t=self.now, replica=self.id, **fields)

    # -- output helpers ----------------------------------------------------

    def _envelope(self, msg: ProtocolMessage, receivers: Optional[Tuple[Address, ...]] = None) -> bytes:
        msg_bytes = encode(msg)
        return encode_envelope(msg_bytes, authenticate(self.address, msg_bytes, self.keyring, self.auth_mode, receivers))

    def send_to(self, destinations: Tuple[Address, ...], msg: ProtocolMessage, log_seq: Optional[int] = None):
        data = self._envelope(msg)
        self.outbox.send(destinations, data, msg.tag)
        if log_seq is not None:
            self.sent_log.setdefault(log_seq, []).append((tuple(destinations), data))

    def multicast(self, msg: ProtocolMessage):
        seq = msg.seq if msg.tag != MessageTag.FETCH_SLOT else None
        self.send_to(self.peers, msg, log_seq=seq)

    def _reply(self, request: Request, seq: int, status: ReplyStatus, result: bytes) -> bytes:
        client = Address.client(request.client)
        reply = Reply(
            view=self.view, seq=seq, sender=self.id, epoch=self.epoch,
            client=request.client, request_id=request.request_id,
            status=status, result=result, result_digest=digest(result),
        )
        data = self._envelope(reply, receivers=(client,))
        self.outbox.send((client,), data, MessageTag.REPLY)
        return data

    def emit_suspicion(self, seq: int, reason: SuspicionReason, details: bytes = b""):
        """Record a suspicion of the primary, once per (seq, reason)."""
        if self.is_primary or (seq, reason) in self._suspected:
            return
        self._suspected.add((seq, reason))
        event = SuspicionEvent(
            replica=self.id, view=self.view, seq=seq, reason=reason, details=details, at_us=self.now
        )
        self.suspicions.append(event)
        self.record("suspicion", seq=seq, reason=reason.value, details=details.hex())
        logger.warning("primary_suspected", replica=self.id, seq=seq, reason=reason.value)

    # -- input -------------------------------------------------------------

    def on_message(self, data: bytes, now: int) -> Outbox:
        """Handle one incoming envelope."""
        self.now = now
        self.outbox = Outbox()
        self.stats["received"] += 1

        try:
            msg, auth, msg_bytes = decode_envelope(data)
        except DecodeError as e:
            self._drop("undecodable", error=str(e))
            return self._finish()

        if isinstance(msg, Reply):
            self._drop("reply_at_replica")
            return self._finish()
        if isinstance(msg, RequestMessage):
            if msg != RequestMessage(request=msg.request):
                self._drop("request_header")
                return self._finish()
            sender = Address.client(msg.request.client)
        else:
            if msg.sender >= self.n or msg.sender == self.id or msg.view != self.view:
                self._drop("bad_header", tag=msg.tag.name)
                return self._finish()
            sender = Address.replica(msg.sender)

        if not verify(auth, sender, msg_bytes, self.address, self.keyring):
            self._drop("authentication", tag=msg.tag.name, sender=str(sender))
            return self._finish()

        try:
            self._dispatch(msg, auth, data)
        except ApplicationError as e:
            logger.error("message_handling_failed", replica=self.id, tag=msg.tag.name, error=str(e))
        return self._finish()

    def on_timer(self, key: str, now: int) -> Outbox:
        self.now = now
        self.outbox = Outbox()
        if key == "tick":
            if self._tick_at == now:
                self._tick_at = None
                self._on_tick()
        elif key == "flush":
            if self.is_primary and self.nd.flush_due(now):
                if self.standby is not None:
                    self._release_standby()
                elif self.nd.undisseminated:
                    self._issue_null_request()
        return self._finish()

    def _drop(self, reason: str, **details):
        self.stats["dropped"] += 1
        logger.debug("message_dropped", replica=self.id, reason=reason, **details)

    def _finish(self) -> Outbox:
        self._schedule_tick()
        outbox, self.outbox = self.outbox, Outbox()
        return outbox

    def _dispatch(self, msg, auth: AuthTag, data: bytes):
        if isinstance(msg, RequestMessage):
            self._on_request(msg.request, auth, data)
        elif isinstance(msg, PrePrepare):
            self._on_pre_prepare(msg)
        elif isinstance(msg, PpuContrib):
            self.nd.on_contribution(msg)
        elif isinstance(msg, PpuDecision):
            self.nd.on_decision(msg)
        elif isinstance(msg, Prepare):
            self._on_vote(msg, prepare=True)
        elif isinstance(msg, Commit):
            self._on_vote(msg, prepare=False)
        elif isinstance(msg, PostcPrePrepare):
            self.nd.on_postc_pre_prepare(msg)
        elif isinstance(msg, (PostcPrepare, PostcCommit)):
            self.nd.on_postc_vote(msg)
        elif isinstance(msg, FetchNd):
            self.nd.on_fetch_nd(msg)
        elif isinstance(msg, NdValues):
            self.nd.on_nd_values(msg)
        elif isinstance(msg, FetchSlot):
            self._on_fetch_slot(msg)

    # -- slots -------------------------------------------------------------

    def _in_horizon(self, seq: int) -> bool:
        return self.last_delivered < seq <= self.last_delivered + self.config.horizon

    def _slot(self, seq: int) -> OrderingSlot:
        slot = self.slots.get(seq)
        if slot is None:
            slot = OrderingSlot(
                view=self.view, seq=seq, owner=self.id, created_at=self.now,
                retransmit_at=self.now + self.config.retransmit_interval_us,
            )
            self.slots[seq] = slot
        return slot

    # -- requests ----------------------------------------------------------

    def _on_request(self, request: Request, auth: AuthTag, data: bytes):
        if request.is_null:
            self._drop("null_request_from_client")
            return

        cached = self.last_reply.get(request.client)
        if cached is not None:
            if cached[0] == request.request_id:
                self.outbox.send((Address.client(request.client),), cached[1], MessageTag.REPLY)
                return
            if request.request_id < cached[0]:
                return

        key = (request.client, request.request_id)
        if not self.is_primary:
            if key not in self.ordered:
                self.outbox.send((Address.replica(self.primary),), data, MessageTag.REQUEST)
            return

        seq = self.ordered.get(key)
        if seq is not None:
            self._resend_slot(seq)
            return
        if self.standby is not None and self.standby[2] == key:
            return
        if self._keep_as_carrier():
            self.standby = (request, auth, key)
            self.nd.arm_flush()
            return
        self._order_request(request, auth)

    def _keep_as_carrier(self) -> bool:
        """
        Whether a new request should wait to carry the next postnd entry.

        Only one request waits at a time, and only while nothing is queued
        for dissemination and some post-determinable execution is still
        outstanding. Every other request is ordered on arrival.
        """
        return (
            self.config.piggyback
            and self.standby is None
            and not self.nd.undisseminated
            and bool(self.nd.outstanding_post)
        )

    def _release_standby(self):
        """Order the waiting request; it picks up every queued postnd entry."""
        if self.standby is None:
            return
        (request, auth, key), self.standby = self.standby, None
        if key not in self.ordered:
            self._order_request(request, auth)

    def _order_request(self, request: Request, auth: Optional[AuthTag]):
        seq = self.next_seq
        try:
            mask, payload = self.nd.primary_propose(seq, request)
        except ApplicationError as e:
            logger.warning("request_rejected", replica=self.id, client=request.client, error=str(e))
            self._reply(request, 0, ReplyStatus.APP_ERROR, str(e).encode())
            return
        self.next_seq += 1
        piggyback = self.nd.take_piggyback(seq, null=False)
        pre_prepare = PrePrepare(
            view=self.view, seq=seq, sender=self.id, epoch=self.epoch,
            request=request, client_auth=auth, mask=mask, payload=payload, piggyback=piggyback,
        )
        self._start_slot(pre_prepare)

    def _issue_null_request(self):
        seq = self.next_seq
        self.next_seq += 1
        self.stats["null_requests"] += 1
        piggyback = self.nd.take_piggyback(seq, null=True)
        self.record("null_request", seq=seq, carried=len(piggyback))
        pre_prepare = PrePrepare(
            view=self.view, seq=seq, sender=self.id, epoch=self.epoch,
            request=Request.null(seq), piggyback=piggyback,
        )
        self._start_slot(pre_prepare)

    def _start_slot(self, pre_prepare: PrePrepare):
        """Primary side: adopt and multicast a new PRE_PREPARE."""
        seq = pre_prepare.seq
        slot = self._slot(seq)
        self._adopt(slot, pre_prepare)
        self.multicast(pre_prepare)

        plan = plan_phases(pre_prepare.mask)
        if plan.needs_post_commit and not pre_prepare.request.is_null:
            self.nd.outstanding_post.add(seq)
        if plan.needs_ppu_phase:
            decision = self.nd.start_ppu(slot)
            if decision is not None:
                self.on_ppu_decided(seq, decision)
        else:
            self._prepare(slot, nd_digest(pre_prepare))

    def _adopt(self, slot: OrderingSlot, pre_prepare: PrePrepare):
        request = pre_prepare.request
        slot.pre_prepare = pre_prepare
        slot.request = request
        slot.request_digest = digest(encode_request(request))
        slot.mask = pre_prepare.mask
        if not request.is_null:
            self.ordered[(request.client, request.request_id)] = slot.seq
        for record in pre_prepare.piggyback:
            self.carrier_of[record.seq] = slot.seq
        self.nd.index_piggyback(pre_prepare)
        slot.advance(SlotPhase.PRE_PREPARED)
        self.record(
            "pre_prepared", seq=slot.seq, request=slot.request_digest.hex(),
            mask=pre_prepare.mask, piggyback=[r.seq for r in pre_prepare.piggyback],
        )

    # -- ordering ----------------------------------------------------------

    def _on_pre_prepare(self, pp: PrePrepare):
        if pp.sender != self.primary or self.is_primary:
            self._drop("pre_prepare_from_backup")
            return
        if not self._in_horizon(pp.seq):
            return

        slot = self._slot(pp.seq)
        request_digest = digest(encode_request(pp.request))
        if slot.request_digest is not None:
            if slot.request_digest != request_digest:
                self.emit_suspicion(pp.seq, SuspicionReason.BAD_ORDER, b"two requests for one seq")
            return

        problem = self._order_problem(pp)
        if problem is not None:
            slot.request_digest = request_digest
            slot.rejected = True
            reason, detail = problem
            self.emit_suspicion(pp.seq, reason, detail.encode())
            return

        if not pp.request.is_null:
            reason = self.nd.backup_check(pp.seq, pp.request, pp.mask, pp.payload)
            if reason is not None:
                slot.request_digest = request_digest
                slot.rejected = True
                self.emit_suspicion(pp.seq, reason, b"pre-prepare values rejected")
                return

        self._adopt(slot, pp)
        plan = plan_phases(pp.mask)
        if plan.needs_ppu_phase or plan.needs_post_commit:
            slot.suspect_at = self.now + self.config.suspicion_timeout_us

        if plan.needs_ppu_phase:
            contribution = self.nd.ppu_contribute(slot)
            if contribution is not None:
                if self.config.digest_dissemination:
                    self.send_to(self.peers, contribution, log_seq=pp.seq)
                else:
                    self.send_to((Address.replica(self.primary),), contribution, log_seq=pp.seq)
            decision = self.nd.take_pending_decision(pp.seq)
            if decision is not None:
                self.nd.on_decision(decision)
        else:
            self._prepare(slot, nd_digest(pp))

    def _order_problem(self, pp: PrePrepare) -> Optional[Tuple[SuspicionReason, str]]:
        request = pp.request
        if request.is_null:
            if pp.mask or pp.payload.segments or pp.payload.decision or pp.client_auth is not None:
                return SuspicionReason.BAD_ORDER, "null request with nondeterministic data"
            if request.request_id != pp.seq:
                return SuspicionReason.BAD_ORDER, "null request bound to another seq"
        else:
            client = Address.client(request.client)
            if pp.client_auth is None or not verify(
                pp.client_auth, client, encode(RequestMessage(request=request)), self.address, self.keyring
            ):
                return SuspicionReason.BAD_ORDER, "request not authenticated by its client"
            earlier = self.ordered.get((request.client, request.request_id))
            if earlier is not None and earlier != pp.seq:
                return SuspicionReason.BAD_ORDER, f"request already ordered at seq {earlier}"
            cached = self.last_reply.get(request.client)
            if cached is not None and request.request_id <= cached[0]:
                return SuspicionReason.BAD_ORDER, "request already executed"

        problem = self.nd.piggyback_problem(pp)
        if problem is not None:
            return SuspicionReason.BAD_ORDER, problem
        return None

    def on_ppu_decided(self, seq: int, decision: PpuDecision):
        """Primary side: the share set is fixed; publish it and prepare."""
        slot = self.slots[seq]
        self.multicast(decision)
        self._prepare(slot, nd_digest(slot.pre_prepare, decision.entries))

    def on_ppu_resolved(self, slot: OrderingSlot, decision):
        """Backup side: every share value is known; vote for the decision."""
        self._prepare(slot, nd_digest(slot.pre_prepare, decision))

    def _prepare(self, slot: OrderingSlot, digest_value: bytes):
        slot.nd_digest = digest_value
        slot.prepare_sent = True
        slot.prepares.add(self.id, slot.vote_key)
        self.multicast(Prepare(
            view=self.view, seq=slot.seq, sender=self.id, epoch=self.epoch,
            request_digest=slot.request_digest, nd_digest=digest_value,
        ))
        self._check_prepared(slot)

    def _on_vote(self, msg, prepare: bool):
        if not self._in_horizon(msg.seq):
            return
        slot = self._slot(msg.seq)
        cert = slot.prepares if prepare else slot.commits
        cert.add(msg.sender, (msg.request_digest, msg.nd_digest))
        if prepare:
            self._check_prepared(slot)
        else:
            self._check_committed(slot)

    def _check_prepared(self, slot: OrderingSlot):
        key = slot.vote_key
        if slot.phase != SlotPhase.PRE_PREPARED or not slot.prepare_sent or key is None:
            return
        if not slot.prepares.reached(key, prepare_quorum(self.f)):
            return
        slot.advance(SlotPhase.PREPARED)
        self.record("prepared", seq=slot.seq)
        slot.commit_sent = True
        slot.commits.add(self.id, key)
        self.multicast(Commit(
            view=self.view, seq=slot.seq, sender=self.id, epoch=self.epoch,
            request_digest=slot.request_digest, nd_digest=slot.nd_digest,
        ))
        self._check_committed(slot)

    def _check_committed(self, slot: OrderingSlot):
        key = slot.vote_key
        if slot.phase != SlotPhase.PREPARED or key is None:
            return
        if not slot.commits.reached(key, commit_quorum(self.f)):
            return
        slot.advance(SlotPhase.COMMITTED)
        self.record("committed", seq=slot.seq)
        self.nd.on_carrier_committed(slot)
        self.try_deliver()

    # -- delivery ----------------------------------------------------------

    def try_deliver(self):
        """Deliver committed slots strictly in seq order."""
        while True:
            slot = self.slots.get(self.last_delivered + 1)
            if slot is None or slot.failed or not slot.reached(SlotPhase.COMMITTED):
                return
            if slot.phase == SlotPhase.DELIVERED or not self._deliver(slot):
                return

    def _resolved_pre(self, slot: OrderingSlot) -> NdPayload:
        return NdPayload(segments=slot.pre_prepare.payload.segments, decision=self.nd.decision_for(slot.seq))

    def _deliver(self, slot: OrderingSlot) -> bool:
        request = slot.request
        if request.is_null:
            self._complete(slot, NdPayload(), None)
            return True

        plan = plan_phases(slot.mask)
        resolved = self._resolved_pre(slot)

        if not plan.needs_post_commit or self.is_primary:
            outcome = self.watchdog.guarded_execute(
                self.app, slot.seq, request, resolved, self.snapshot, replay=False, view=self.view
            )
            self.outbox.cost_us += outcome.consumed_us
            if not outcome.ok:
                self._execution_failed(slot, outcome)
                return False
            data = resolved
            if plan.needs_post_commit:
                entry = self.nd.record_postnd(slot.seq, outcome.result)
                data = resolved.with_segments(*entry.values)
                self._complete(slot, data, outcome.result.result)
                self.nd.disseminate_postnd(entry)
                self._release_standby()
            else:
                self._complete(slot, data, outcome.result.result)
            return True

        entry = self.nd.agreed_postnd(slot.seq)
        if entry is None:
            if slot.advance(SlotPhase.ND_PENDING):
                self.record("nd_pending", seq=slot.seq)
            return False

        post_classes = 0
        for seg in entry.values:
            post_classes |= seg.nd_type
        if post_classes != slot.mask & POST_DETERMINABLE:
            slot.failed = True
            self.emit_suspicion(slot.seq, SuspicionReason.ND_VALUE_REJECTED, b"agreed values miss declared classes")
            return False

        data = resolved.with_segments(*entry.values)
        if plan.verify_post_values:
            try:
                accepted = self.app.check_value(slot.seq, request, slot.mask, data, self.view) == CheckVerdict.ACCEPT
            except Exception as e:
                logger.warning("check_value_failed", replica=self.id, seq=slot.seq, error=str(e))
                accepted = False
            if not accepted:
                slot.failed = True
                self.emit_suspicion(slot.seq, SuspicionReason.ND_VALUE_REJECTED, b"post-determined values rejected")
                return False

        outcome = self.watchdog.guarded_execute(
            self.app, slot.seq, request, data, self.snapshot, replay=True, view=self.view
        )
        self.outbox.cost_us += outcome.consumed_us
        if not outcome.ok:
            self._execution_failed(slot, outcome)
            return False

        result = outcome.result.result
        if digest(result) != entry.reply_digest:
            self.emit_suspicion(slot.seq, SuspicionReason.REPLY_DIGEST_MISMATCH, digest(result))
        self._complete(slot, data, result)
        return True

    def _complete(self, slot: OrderingSlot, data: NdPayload, result: Optional[bytes]):
        request = slot.request
        slot.advance(SlotPhase.DELIVERED)
        self.last_delivered = slot.seq
        self.stats["delivered"] += 1
        if result is not None:
            reply = self._reply(request, slot.seq, ReplyStatus.OK, result)
            self.last_reply[request.client] = (request.request_id, reply)
            self.snapshot = self.app.snapshot()
        self.record(
            "delivered", seq=slot.seq, view=self.view, request=slot.request_digest.hex(),
            nd=delivery_digest(data).hex(), result=digest(result).hex() if result is not None else None,
            null=request.is_null,
        )
        self._prune()

    def _execution_failed(self, slot: OrderingSlot, outcome: ExecutionOutcome):
        slot.failed = True
        self.nd.outstanding_post.discard(slot.seq)
        if outcome.failure == ExecutionFailure.DEADLOCK:
            self.record("deadlock_rejected", seq=slot.seq, cycle=outcome.cycle)
            details = ("deadlock: " + " -> ".join(outcome.cycle or [])).encode()
        else:
            before = digest(self.snapshot).hex()
            self.epoch += 1
            self.record(
                "restart", seq=slot.seq, failure=outcome.failure.value, epoch=self.epoch,
                before=before, after=self.app.state_digest().hex(), consumed_us=outcome.consumed_us,
            )
            logger.warning(
                "replica_restarted", replica=self.id, seq=slot.seq,
                failure=outcome.failure.value, epoch=self.epoch,
            )
            details = f"{outcome.failure.value}: {outcome.detail}".encode()
        self.emit_suspicion(slot.seq, SuspicionReason.EXEC_CRASH_OR_DEADLOCK, details)
        if self.is_primary:
            self._release_standby()

    def _prune(self):
        horizon = self.config.horizon
        stale = [seq for seq in self.slots if seq <= self.last_delivered - horizon]
        for seq in stale:
            slot = self.slots.pop(seq)
            if slot.request is not None and not slot.request.is_null:
                self.ordered.pop((slot.request.client, slot.request.request_id), None)
            self.sent_log.pop(seq, None)
            self.carrier_of.pop(seq, None)
            self._last_resend.pop(seq, None)
            self.nd.forget(seq)

    # -- retransmission and suspicion timers --------------------------------

    def _resend_slot(self, seq: int, to: Optional[Address] = None):
        """Re-send what this replica sent for ``seq`` and for the carrier of its entry."""
        if to is None:
            last = self._last_resend.get(seq)
            if last is not None and self.now - last < self.config.retransmit_interval_us:
                return
            self._last_resend[seq] = self.now
        seqs = [seq]
        if seq in self.carrier_of:
            seqs.append(self.carrier_of[seq])
        for s in seqs:
            for destinations, data in self.sent_log.get(s, []):
                targets = destinations if to is None else ((to,) if to in destinations else ())
                if targets:
                    self.outbox.send(targets, data, MessageTag(data[0]))

    def _on_fetch_slot(self, msg: FetchSlot):
        self._resend_slot(msg.seq, to=Address.replica(msg.sender))

    def _waiting_on_nd(self, slot: OrderingSlot) -> bool:
        if slot.pre_prepare is None:
            return False
        plan = plan_phases(slot.mask)
        if plan.needs_ppu_phase and self.nd.ppu_unresolved(slot.seq):
            return True
        return plan.needs_post_commit and self.nd.agreed_postnd(slot.seq) is None

    def _on_tick(self):
        for seq in sorted(self.slots):
            slot = self.slots[seq]
            if seq <= self.last_delivered or slot.failed or slot.rejected:
                continue
            if slot.suspect_at is not None and self.now >= slot.suspect_at:
                slot.suspect_at = None
                if self._waiting_on_nd(slot):
                    self.emit_suspicion(seq, SuspicionReason.ND_AGREEMENT_FAILED, b"nondeterministic data not agreed in time")
            if self.now >= slot.retransmit_at:
                self._resend_slot(seq)
                self.multicast(FetchSlot(view=self.view, seq=seq, sender=self.id, epoch=self.epoch))
                age = max(1, (self.now - slot.created_at) // self.config.retransmit_interval_us)
                backoff = min(MAX_BACKOFF, 1 << (age.bit_length() - 1))
                slot.retransmit_at = self.now + backoff * self.config.retransmit_interval_us

    def _schedule_tick(self):
        deadlines = []
        for seq, slot in self.slots.items():
            if seq <= self.last_delivered or slot.failed or slot.rejected:
                continue
            deadlines.append(slot.retransmit_at)
            if slot.suspect_at is not None:
                deadlines.append(slot.suspect_at)
        if not deadlines:
            return
        fire_at = max(min(deadlines), self.now + 1)
        if self._tick_at is None or fire_at < self._tick_at or self._tick_at < self.now:
            self._tick_at = fire_at
            self.outbox.timer("tick", fire_at)
