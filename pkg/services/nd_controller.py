from functools import lru_cache
from typing import TYPE_CHECKING, Dict, List, Optional, Set, Tuple

from pydantic import BaseModel, ConfigDict

from apps.base_app import CheckVerdict, ExecutionResult
from core.codec import encode_nd_data, encode_payload, encode_record, encode_share_statement
from core.crypto import authenticate, digest, verify
from core.errors import ApplicationError, InvalidMaskError
from core.quorum import VoteCertificate, decision_size
from models.auth import Address, AuthMode, AuthTag
from models.message import (
    FetchNd,
    NdValues,
    PostcCommit,
    PostcPrepare,
    PostcPrePrepare,
    PpuContrib,
    PpuDecision,
    PrePrepare,
    Request,
)
from models.payload import (
    POST_DETERMINABLE,
    RESERVED_BITS,
    DecisionEntry,
    NdPayload,
    NdType,
    PostndRecord,
)
from models.slot import (
    OrderingSlot,
    PostndEntry,
    PostndStatus,
    PpuState,
    SlotPhase,
    SuspicionReason,
)
from utils.logging_config import get_logger

if TYPE_CHECKING:
    from services.replica_engine import Replica

logger = get_logger(__name__)


class PhasePlan(BaseModel):
    """Extra protocol work a request's mask requires."""

    model_config = ConfigDict(frozen=True)

    carries_values_in_pre_prepare: bool = False
    needs_ppu_phase: bool = False
    needs_post_commit: bool = False
    verify_post_values: bool = False


@lru_cache(maxsize=16)
def plan_phases(mask: int) -> PhasePlan:
    """
    Map a nondeterminism mask to the phases it adds.

    Raises:
        InvalidMaskError: If reserved bits are set
    """
    if mask < 0 or mask > 0xFF or mask & RESERVED_BITS:
        raise InvalidMaskError(mask)
    return PhasePlan(
        carries_values_in_pre_prepare=bool(mask & NdType.VPRE),
        needs_ppu_phase=bool(mask & NdType.NPRE),
        needs_post_commit=bool(mask & POST_DETERMINABLE),
        verify_post_values=bool(mask & NdType.VPOST),
    )


def nd_digest(pre_prepare: PrePrepare, decision: Tuple[DecisionEntry, ...] = ()) -> bytes:
    """Digest PREPARE/COMMIT votes certify alongside the request digest."""
    return digest(encode_nd_data(pre_prepare.payload.segments, decision, pre_prepare.piggyback))


def delivery_digest(payload: NdPayload) -> bytes:
    """Digest of everything execution consumed, decision values included."""
    return digest(encode_payload(payload))


class PostCommitRound:
    """Standalone three-phase agreement on one postnd record."""

    def __init__(self, owner: int):
        self.record: Optional[PostndRecord] = None
        self.digest: Optional[bytes] = None
        self.prepares = VoteCertificate(owner)
        self.commits = VoteCertificate(owner)
        self.prepare_sent = False
        self.commit_sent = False
        self.agreed = False


class NdController:
    """
    Nondeterminism handling of one replica.

    Owns the NPRE share exchange, the postnd log and both agreement paths
    for post-determined values (piggybacked on later PRE_PREPAREs, or a
    standalone post-commit round). Messages go out through the replica.
    """

    def __init__(self, replica: "Replica"):
        self.replica = replica
        self.share_mode = (
            AuthMode.SIGNATURE if replica.config.share_auth_mode == "signature" else AuthMode.AUTHENTICATOR
        )

        self.ppu: Dict[int, PpuState] = {}
        self.pending_decisions: Dict[int, PpuDecision] = {}
        # seq -> proposer -> (request digest, share, share digest, tag)
        self.contrib_log: Dict[int, Dict[int, Tuple[bytes, bytes, bytes, AuthTag]]] = {}

        self.postnd_log: Dict[int, PostndEntry] = {}
        self.undisseminated: List[int] = []
        self.outstanding_post: Set[int] = set()
        self.flush_deadline: Optional[int] = None

        # record seq -> carrier seq -> record
        self.piggyback_index: Dict[int, Dict[int, PostndRecord]] = {}
        self.agreed: Dict[int, PostndEntry] = {}
        self.rounds: Dict[Tuple[int, int, str], PostCommitRound] = {}

    # -- pre-determinable --------------------------------------------------

    def primary_propose(self, seq: int, request: Request) -> Tuple[int, NdPayload]:
        """
        Ask the application for the mask and pre-determined values of ``request``.

        Raises:
            ApplicationError: If the application cannot propose values
        """
        r = self.replica
        try:
            mask, payload = r.app.propose_value(seq, request, r.view)
            plan_phases(mask)
        except ApplicationError:
            raise
        except Exception as e:
            raise ApplicationError(f"propose_value failed: {e}") from e
        return mask, payload.restricted_to(mask & ~POST_DETERMINABLE)

    def backup_check(
        self, seq: int, request: Request, mask: int, payload: NdPayload
    ) -> Optional[SuspicionReason]:
        """Validate a PRE_PREPARE's mask and values; None when acceptable."""
        r = self.replica
        try:
            plan = plan_phases(mask)
        except InvalidMaskError:
            return SuspicionReason.ND_TYPE_MISMATCH
        if payload.classes & POST_DETERMINABLE:
            return SuspicionReason.ND_TYPE_MISMATCH
        if payload.decision:
            return SuspicionReason.ND_VALUE_REJECTED
        if plan.needs_ppu_phase and payload.segment(NdType.NPRE) is None:
            return SuspicionReason.ND_VALUE_REJECTED

        try:
            verdict = r.app.check_value(seq, request, mask, payload, r.view)
        except Exception as e:
            logger.warning("check_value_failed", replica=r.id, seq=seq, error=str(e))
            return SuspicionReason.ND_VALUE_REJECTED

        if verdict == CheckVerdict.TYPE_MISMATCH:
            return SuspicionReason.ND_TYPE_MISMATCH
        if verdict == CheckVerdict.VALUE_REJECTED:
            return SuspicionReason.ND_VALUE_REJECTED
        return None

    def _statement(self, view: int, seq: int, request_digest: bytes, proposer: int, value_digest: bytes) -> bytes:
        return encode_share_statement(view, seq, request_digest, proposer, value_digest)

    def share_tag(self, seq: int, request_digest: bytes, share: bytes) -> AuthTag:
        r = self.replica
        statement = self._statement(r.view, seq, request_digest, r.id, digest(share))
        return authenticate(r.address, statement, r.keyring, self.share_mode)

    def verify_share(
        self, seq: int, request_digest: bytes, proposer: int, value_digest: bytes, tag: AuthTag
    ) -> bool:
        r = self.replica
        if proposer >= r.n:
            return False
        statement = self._statement(r.view, seq, request_digest, proposer, value_digest)
        return verify(tag, Address.replica(proposer), statement, r.address, r.keyring)

    def _log_contribution(self, seq: int, proposer: int, request_digest: bytes, share: bytes, tag: AuthTag) -> bool:
        log = self.contrib_log.setdefault(seq, {})
        if proposer in log:
            return False
        log[proposer] = (request_digest, share, digest(share), tag)
        return True

    def start_ppu(self, slot: OrderingSlot) -> Optional[PpuDecision]:
        """Primary side: seed the share set with the PRE_PREPARE's own share."""
        r = self.replica
        share = slot.pre_prepare.payload.segment(NdType.NPRE)
        tag = self.share_tag(slot.seq, slot.request_digest, share)
        state = PpuState(seq=slot.seq, request_digest=slot.request_digest, own_share=share)
        state.contributions[r.id] = (share, digest(share), tag)
        self._log_contribution(slot.seq, r.id, slot.request_digest, share, tag)
        self.ppu[slot.seq] = state
        return self.ppu_decide(state)

    def ppu_contribute(self, slot: OrderingSlot) -> Optional[PpuContrib]:
        """Backup side: produce this replica's authenticated share."""
        r = self.replica
        try:
            _, payload = r.app.propose_value(slot.seq, slot.request, r.view)
        except Exception as e:
            logger.warning("share_generation_failed", replica=r.id, seq=slot.seq, error=str(e))
            return None
        share = payload.segment(NdType.NPRE)
        if share is None:
            return None

        tag = self.share_tag(slot.seq, slot.request_digest, share)
        self._log_contribution(slot.seq, r.id, slot.request_digest, share, tag)
        state = self.ppu.setdefault(slot.seq, PpuState(seq=slot.seq, request_digest=slot.request_digest))
        state.own_share = share
        return PpuContrib(
            view=r.view, seq=slot.seq, sender=r.id, epoch=r.epoch,
            request_digest=slot.request_digest, share=share, share_tag=tag,
        )

    def on_contribution(self, msg: PpuContrib):
        r = self.replica
        if msg.sender == r.id:
            return
        if not self.verify_share(msg.seq, msg.request_digest, msg.sender, digest(msg.share), msg.share_tag):
            logger.debug("contribution_dropped", replica=r.id, seq=msg.seq, proposer=msg.sender)
            return
        if not self._log_contribution(msg.seq, msg.sender, msg.request_digest, msg.share, msg.share_tag):
            return

        state = self.ppu.get(msg.seq)
        if state is None:
            return
        if r.is_primary:
            if state.decision is None and msg.request_digest == state.request_digest:
                state.contributions[msg.sender] = (msg.share, digest(msg.share), msg.share_tag)
                decision = self.ppu_decide(state)
                if decision is not None:
                    r.on_ppu_decided(msg.seq, decision)
        elif state.missing:
            self._resume_resolution(msg.seq)

    def ppu_decide(self, state: PpuState) -> Optional[PpuDecision]:
        """
        Fix the decision set once 2f valid backup shares are in.

        The set is the primary plus the 2f lowest-numbered contributing
        backups, in ascending proposer order.
        """
        r = self.replica
        if state.decision is not None:
            return None
        backups = [p for p in state.valid_proposers() if p != r.id]
        needed = decision_size(r.f) - 1
        if len(backups) < needed:
            return None

        chosen = sorted([r.id] + backups[:needed])
        full = []
        for proposer in chosen:
            share, share_digest, tag = state.contributions[proposer]
            full.append(DecisionEntry(proposer=proposer, value=share, value_digest=share_digest, tag=tag))
        state.resolved = tuple(full)
        if r.config.digest_dissemination:
            state.decision = tuple(e.without_value() for e in full)
        else:
            state.decision = state.resolved

        r.record("ppu_decision", seq=state.seq, proposers=chosen)
        return PpuDecision(
            view=r.view, seq=state.seq, sender=r.id, epoch=r.epoch,
            request_digest=state.request_digest, entries=state.decision,
        )

    def on_decision(self, msg: PpuDecision):
        r = self.replica
        if r.is_primary or msg.sender != r.primary:
            return
        slot = r.slots.get(msg.seq)
        if slot is None or slot.pre_prepare is None:
            self.pending_decisions.setdefault(msg.seq, msg)
            return
        if slot.rejected or slot.nd_digest is not None:
            return
        state = self.ppu.get(msg.seq)
        if state is not None and state.decision is not None:
            return
        self.ppu_verify_and_resolve(slot, msg)

    def take_pending_decision(self, seq: int) -> Optional[PpuDecision]:
        return self.pending_decisions.pop(seq, None)

    def ppu_verify_and_resolve(self, slot: OrderingSlot, msg: PpuDecision):
        """
        Check a decision set and resolve every share value.

        A bad set rejects the slot with ND_VALUE_REJECTED. Values not held
        locally are fetched from the primary before the replica prepares.
        """
        r = self.replica
        entries = msg.entries
        reason = self._decision_problem(slot, msg)
        if reason is not None:
            slot.rejected = True
            r.emit_suspicion(slot.seq, SuspicionReason.ND_VALUE_REJECTED, reason.encode())
            return

        state = self.ppu.setdefault(slot.seq, PpuState(seq=slot.seq, request_digest=slot.request_digest))
        state.decision = entries
        self._resume_resolution(slot.seq)

    def _decision_problem(self, slot: OrderingSlot, msg: PpuDecision) -> Optional[str]:
        r = self.replica
        entries = msg.entries
        if msg.request_digest != slot.request_digest:
            return "decision names another request"
        proposers = [e.proposer for e in entries]
        if len(entries) != decision_size(r.f) or len(set(proposers)) != len(proposers):
            return "decision set has the wrong size"
        if proposers != sorted(proposers) or r.primary not in proposers:
            return "decision set is not canonical"

        primary_share = slot.pre_prepare.payload.segment(NdType.NPRE)
        for e in entries:
            if e.value is not None and digest(e.value) != e.value_digest:
                return f"value of proposer {e.proposer} does not match its digest"
            if not self.verify_share(slot.seq, slot.request_digest, e.proposer, e.value_digest, e.tag):
                return f"share tag of proposer {e.proposer} does not verify"
            if e.proposer == r.primary and e.value_digest != digest(primary_share):
                return "primary entry differs from its PRE_PREPARE share"
        return None

    def _resume_resolution(self, seq: int):
        r = self.replica
        state = self.ppu.get(seq)
        slot = r.slots.get(seq)
        if state is None or state.decision is None or state.resolved is not None or slot is None:
            return

        log = self.contrib_log.get(seq, {})
        resolved = []
        missing = set()
        for e in state.decision:
            value = e.value
            if value is None:
                logged = log.get(e.proposer)
                if logged is not None and logged[0] == state.request_digest and logged[2] == e.value_digest:
                    value = logged[1]
                elif e.proposer == r.primary:
                    value = slot.pre_prepare.payload.segment(NdType.NPRE)
            if value is None:
                missing.add(e.proposer)
            else:
                resolved.append(e.model_copy(update={"value": value}))

        state.missing = missing
        if missing:
            if not state.fetch_sent:
                state.fetch_sent = True
                r.send_to(
                    (Address.replica(r.primary),),
                    FetchNd(
                        view=r.view, seq=seq, sender=r.id, epoch=r.epoch,
                        request_digest=state.request_digest, missing=tuple(sorted(missing)),
                    ),
                )
            return

        state.resolved = tuple(resolved)
        r.on_ppu_resolved(slot, state.decision)

    def on_fetch_nd(self, msg: FetchNd):
        r = self.replica
        log = self.contrib_log.get(msg.seq, {})
        entries = []
        for proposer in msg.missing:
            logged = log.get(proposer)
            if logged is None or logged[0] != msg.request_digest:
                continue
            _, share, share_digest, tag = logged
            entries.append(DecisionEntry(proposer=proposer, value=share, value_digest=share_digest, tag=tag))
        if entries:
            r.send_to(
                (Address.replica(msg.sender),),
                NdValues(
                    view=r.view, seq=msg.seq, sender=r.id, epoch=r.epoch,
                    request_digest=msg.request_digest, entries=tuple(entries),
                ),
            )

    def on_nd_values(self, msg: NdValues):
        state = self.ppu.get(msg.seq)
        if state is None or not state.missing or state.decision is None:
            return
        wanted = {e.proposer: e for e in state.decision}
        for e in msg.entries:
            expected = wanted.get(e.proposer)
            if expected is None or e.value is None or digest(e.value) != expected.value_digest:
                continue
            log = self.contrib_log.setdefault(msg.seq, {})
            log[e.proposer] = (state.request_digest, e.value, expected.value_digest, expected.tag)
        self._resume_resolution(msg.seq)

    def decision_for(self, seq: int) -> Tuple[DecisionEntry, ...]:
        state = self.ppu.get(seq)
        return state.resolved if state and state.resolved else ()

    def ppu_unresolved(self, seq: int) -> bool:
        state = self.ppu.get(seq)
        return state is None or state.resolved is None

    # -- post-determinable -------------------------------------------------

    def record_postnd(self, seq: int, result: ExecutionResult) -> PostndEntry:
        """Primary side: log what execution produced for later agreement."""
        r = self.replica
        values = result.recorded.restricted_to(POST_DETERMINABLE).segments
        entry = PostndEntry(seq=seq, values=values, reply_digest=digest(result.result))
        self.postnd_log[seq] = entry
        self.outstanding_post.discard(seq)
        r.record("postnd_recorded", seq=seq, size=sum(len(v.data) for v in values))
        return entry

    def disseminate_postnd(self, entry: PostndEntry):
        """Queue an entry for piggybacking, or start a standalone round."""
        r = self.replica
        if r.config.piggyback:
            self.undisseminated.append(entry.seq)
            self.arm_flush()
            return

        entry.status = PostndStatus.IN_AGREEMENT
        record = entry.record
        r.record("postnd_disseminated", seq=entry.seq, path="standalone", carrier=None)
        r.multicast(PostcPrePrepare(view=r.view, seq=entry.seq, sender=r.id, epoch=r.epoch, record=record))
        rnd = self._round(entry.seq)
        rnd.record = record
        rnd.digest = digest(encode_record(record))
        self._send_postc_prepare(entry.seq, rnd)

    def take_piggyback(self, carrier_seq: int, null: bool) -> Tuple[PostndRecord, ...]:
        """Hand every recorded but not yet disseminated entry to the next PRE_PREPARE."""
        r = self.replica
        if not self.undisseminated:
            return ()
        records = []
        path = "null_request" if null else "piggyback"
        for seq in self.undisseminated:
            entry = self.postnd_log[seq]
            entry.status = PostndStatus.IN_AGREEMENT
            entry.carrier_seq = carrier_seq
            records.append(entry.record)
            r.record("postnd_disseminated", seq=seq, path=path, carrier=carrier_seq)
        self.undisseminated = []
        self.flush_deadline = None
        return tuple(records)

    def arm_flush(self):
        """Start the flush timer unless it is already running."""
        r = self.replica
        if self.flush_deadline is None:
            self.flush_deadline = r.now + r.config.flush_timer_us
            r.outbox.timer("flush", self.flush_deadline)

    def flush_due(self, now: int) -> bool:
        if self.flush_deadline is None or now < self.flush_deadline:
            return False
        self.flush_deadline = None
        return True

    def index_piggyback(self, pre_prepare: PrePrepare):
        for record in pre_prepare.piggyback:
            self.piggyback_index.setdefault(record.seq, {})[pre_prepare.seq] = record

    def piggyback_problem(self, pre_prepare: PrePrepare) -> Optional[str]:
        """Structural checks on records riding a PRE_PREPARE."""
        r = self.replica
        if pre_prepare.piggyback and not r.config.piggyback:
            return "piggybacked records while piggybacking is disabled"
        seen = set()
        for record in pre_prepare.piggyback:
            if record.seq >= pre_prepare.seq or record.seq in seen:
                return f"record for seq {record.seq} cannot ride seq {pre_prepare.seq}"
            seen.add(record.seq)
            slot = r.slots.get(record.seq)
            if slot is not None and slot.pre_prepare is not None:
                if not plan_phases(slot.mask).needs_post_commit:
                    return f"record for seq {record.seq} which has no post-determinable class"
        return None

    def on_carrier_committed(self, slot: OrderingSlot):
        """Primary side bookkeeping when a carrier PRE_PREPARE commits."""
        r = self.replica
        if not r.is_primary or slot.pre_prepare is None:
            return
        for record in slot.pre_prepare.piggyback:
            entry = self.postnd_log.get(record.seq)
            if entry is not None and entry.status != PostndStatus.AGREED:
                entry.status = PostndStatus.AGREED
                r.record("postnd_agreed", seq=record.seq, carrier=slot.seq)

    def agreed_postnd(self, seq: int) -> Optional[PostndEntry]:
        """
        The agreed entry for ``seq``, or None while agreement is incomplete.

        A piggybacked record counts once its carrier committed and every seq
        between ``seq`` and the carrier committed without carrying another
        record for ``seq``; every correct replica thus picks the same one.
        """
        r = self.replica
        entry = self.agreed.get(seq)
        if entry is not None:
            return entry

        if r.config.piggyback:
            for carrier in range(seq + 1, seq + r.config.horizon + 1):
                slot = r.slots.get(carrier)
                if slot is None or slot.pre_prepare is None or not slot.reached(SlotPhase.COMMITTED):
                    return None
                record = self.piggyback_index.get(seq, {}).get(carrier)
                if record is not None:
                    entry = PostndEntry.from_record(record, PostndStatus.AGREED)
                    entry.carrier_seq = carrier
                    break
            else:
                return None
        else:
            rnd = self.rounds.get((r.view, seq, "postnd"))
            if rnd is None or not rnd.agreed:
                return None
            entry = PostndEntry.from_record(rnd.record, PostndStatus.AGREED)

        self.agreed[seq] = entry
        r.record("postnd_agreed", seq=seq, carrier=entry.carrier_seq)
        return entry

    # -- standalone post-commit rounds --------------------------------------

    def _round(self, seq: int) -> PostCommitRound:
        r = self.replica
        key = (r.view, seq, "postnd")
        rnd = self.rounds.get(key)
        if rnd is None:
            rnd = PostCommitRound(r.id)
            self.rounds[key] = rnd
        return rnd

    def _send_postc_prepare(self, seq: int, rnd: PostCommitRound):
        r = self.replica
        rnd.prepare_sent = True
        rnd.prepares.add(r.id, rnd.digest)
        r.multicast(PostcPrepare(view=r.view, seq=seq, sender=r.id, epoch=r.epoch, postnd_digest=rnd.digest))
        self.post_commit_agree(seq)

    def on_postc_pre_prepare(self, msg: PostcPrePrepare):
        r = self.replica
        if r.config.piggyback or r.is_primary or msg.sender != r.primary or msg.record.seq != msg.seq:
            return
        rnd = self._round(msg.seq)
        proposed = digest(encode_record(msg.record))
        if rnd.record is not None:
            if rnd.digest != proposed:
                r.emit_suspicion(msg.seq, SuspicionReason.ND_AGREEMENT_FAILED, b"conflicting postnd proposals")
            return
        slot = r.slots.get(msg.seq)
        if slot is not None and slot.pre_prepare is not None and not plan_phases(slot.mask).needs_post_commit:
            r.emit_suspicion(msg.seq, SuspicionReason.BAD_ORDER, b"postnd proposal for a deterministic seq")
            return
        rnd.record = msg.record
        rnd.digest = proposed
        self._send_postc_prepare(msg.seq, rnd)

    def on_postc_vote(self, msg):
        r = self.replica
        if r.config.piggyback or msg.sender == r.id:
            return
        rnd = self._round(msg.seq)
        cert = rnd.prepares if isinstance(msg, PostcPrepare) else rnd.commits
        cert.add(msg.sender, msg.postnd_digest)
        self.post_commit_agree(msg.seq)

    def post_commit_agree(self, seq: int):
        """Advance the standalone round for ``seq`` as far as its votes allow."""
        r = self.replica
        rnd = self._round(seq)
        if rnd.record is None or not rnd.prepare_sent:
            return
        quorum = 2 * r.f
        if not rnd.commit_sent and rnd.prepares.reached(rnd.digest, quorum):
            rnd.commit_sent = True
            rnd.commits.add(r.id, rnd.digest)
            r.multicast(PostcCommit(view=r.view, seq=seq, sender=r.id, epoch=r.epoch, postnd_digest=rnd.digest))
        if rnd.commit_sent and not rnd.agreed and rnd.commits.reached(rnd.digest, quorum):
            rnd.agreed = True
            if r.is_primary:
                entry = self.postnd_log.get(seq)
                if entry is not None:
                    entry.status = PostndStatus.AGREED
                r.record("postnd_agreed", seq=seq, carrier=None)
            else:
                r.try_deliver()

    def forget(self, seq: int):
        """Drop per-seq state that fell out of the retention window."""
        self.ppu.pop(seq, None)
        self.pending_decisions.pop(seq, None)
        self.contrib_log.pop(seq, None)
        self.postnd_log.pop(seq, None)
        self.piggyback_index.pop(seq, None)
        self.agreed.pop(seq, None)
        self.rounds.pop((self.replica.view, seq, "postnd"), None)
