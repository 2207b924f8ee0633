from typing import Dict, List, Optional, Set, Tuple

from core.codec import decode_envelope, encode, encode_envelope, encode_record, encode_request
from core.crypto import authenticate, digest
from core.errors import DecodeError
from models.auth import Address, AuthTag
from models.message import (
    Commit,
    PostcCommit,
    PostcPrepare,
    PostcPrePrepare,
    PpuContrib,
    PpuDecision,
    Prepare,
    PrePrepare,
    ProtocolMessage,
    Reply,
    Request,
)
from models.payload import NdType, PostndRecord
from models.scenario import FaultBehavior, FaultSpec
from services.nd_controller import nd_digest
from services.outbox import Outbound, Outbox
from services.replica_engine import Replica
from utils.logging_config import get_logger

logger = get_logger(__name__)

RECORD_FAULTS = (
    FaultBehavior.WRONG_POSTND_VALUES,
    FaultBehavior.WRONG_REPLY_DIGEST,
    FaultBehavior.DEADLOCK_ORDER,
    FaultBehavior.CRASH_ORDER,
)

# Primary-only behaviors turn into conflicting votes when scripted on a backup.
VOTE_FAULTS = (
    FaultBehavior.WRONG_VPRE_VALUE,
    FaultBehavior.WRONG_ND_TYPE,
    FaultBehavior.EQUIVOCATE_PRE_PREPARE,
) + RECORD_FAULTS

VoteKey = Tuple[bytes, bytes]


def _flip(data: bytes) -> bytes:
    if not data:
        return b"\x01"
    return bytes([data[0] ^ 0xFF]) + data[1:]


class ByzantineReplica:
    """
    Scripted faulty replica.

    Wraps an honest :class:`Replica` and rewrites its outputs according to
    the fault script. The wrapper keeps its own replica's view consistent by
    translating the votes it receives for values it lied about.
    """

    def __init__(self, replica: Replica, faults: List[FaultSpec]):
        self.inner = replica
        self.faults = list(faults)
        self.crashed = False

        self.mutated: Dict[int, PrePrepare] = {}
        self.equivocated: Dict[int, Set[Address]] = {}
        # (seq, key sent) -> key the honest replica expects
        self.vote_translation: Dict[Tuple[int, VoteKey], VoteKey] = {}
        self.postc_translation: Dict[Tuple[int, bytes], bytes] = {}
        self.mutated_records: Dict[int, PostndRecord] = {}
        self._injected: Set[Tuple[str, int]] = set()

    def __getattr__(self, name):
        return getattr(self.inner, name)

    @property
    def behaviors(self) -> List[FaultBehavior]:
        return [fault.behavior for fault in self.faults]

    def _active(self, behavior: FaultBehavior, seq: int, now: int) -> bool:
        for fault in self.faults:
            if fault.behavior != behavior or not fault.trigger.covers(seq):
                continue
            if fault.trigger.at_us is None or now >= fault.trigger.at_us:
                return True
        return False

    def _note(self, behavior: FaultBehavior, seq: int):
        if (behavior.value, seq) not in self._injected:
            self._injected.add((behavior.value, seq))
            self.inner.record("fault_injected", behavior=behavior.value, seq=seq)

    # -- event entry points ------------------------------------------------

    def on_message(self, data: bytes, now: int) -> Outbox:
        if self._crash_due(now):
            return Outbox()
        outbox = self.inner.on_message(self._translate_incoming(data), now)
        return self._intercept(outbox, now)

    def on_timer(self, key: str, now: int) -> Outbox:
        if self._crash_due(now):
            return Outbox()
        return self._intercept(self.inner.on_timer(key, now), now)

    def _crash_due(self, now: int) -> bool:
        if self.crashed:
            return True
        for fault in self.faults:
            if fault.behavior != FaultBehavior.CRASH_REPLICA:
                continue
            trigger = fault.trigger
            if trigger.at_us is not None:
                due = now >= trigger.at_us
            else:
                due = self.inner.last_delivered >= trigger.from_seq
            if due:
                self.crashed = True
                self.inner.now = now
                self.inner.record("crash", last_delivered=self.inner.last_delivered)
                logger.info("replica_crashed", replica=self.inner.id, at_us=now)
                return True
        return False

    # -- envelope helpers --------------------------------------------------

    def _seal(self, msg: ProtocolMessage, sender: Optional[Address] = None, receivers=None) -> bytes:
        inner = self.inner
        msg_bytes = encode(msg)
        tag = authenticate(sender or inner.address, msg_bytes, inner.keyring, inner.auth_mode, receivers)
        return encode_envelope(msg_bytes, tag)

    def _translate_incoming(self, data: bytes) -> bytes:
        """Show the honest replica the votes it would have received for its real values."""
        if not self.vote_translation and not self.postc_translation:
            return data
        try:
            msg, _, _ = decode_envelope(data)
        except DecodeError:
            return data
        sender = Address.replica(msg.sender)
        if isinstance(msg, (Prepare, Commit)):
            original = self.vote_translation.get((msg.seq, (msg.request_digest, msg.nd_digest)))
            if original is not None:
                honest = msg.model_copy(update={"request_digest": original[0], "nd_digest": original[1]})
                return self._seal(honest, sender=sender)
        elif isinstance(msg, (PostcPrepare, PostcCommit)):
            original = self.postc_translation.get((msg.seq, msg.postnd_digest))
            if original is not None:
                return self._seal(msg.model_copy(update={"postnd_digest": original}), sender=sender)
        return data

    def _intercept(self, outbox: Outbox, now: int) -> Outbox:
        result = Outbox()
        result.timers = outbox.timers
        result.cost_us = outbox.cost_us
        for out in outbox.messages:
            for mutated in self._mutate(out, now):
                result.send(mutated.destinations, mutated.data, mutated.tag)
        return result

    # -- mutations ---------------------------------------------------------

    def _mutate(self, out: Outbound, now: int) -> List[Outbound]:
        try:
            msg, _, _ = decode_envelope(out.data)
        except DecodeError:
            return [out]
        primary = self.inner.is_primary

        if isinstance(msg, PrePrepare) and primary:
            return self._mutate_pre_prepare(msg, out, now)
        if isinstance(msg, PpuDecision) and primary:
            return self._mutate_decision(msg, out, now)
        if isinstance(msg, PpuContrib) and not primary:
            return self._mutate_contribution(msg, out, now)
        if isinstance(msg, PostcPrePrepare) and primary:
            record = self._mutate_record(msg.record, now)
            if record is msg.record:
                return [out]
            self.postc_translation[(msg.seq, digest(encode_record(record)))] = digest(encode_record(msg.record))
            return [Outbound(out.destinations, self._seal(msg.model_copy(update={"record": record})), out.tag)]
        if isinstance(msg, (Prepare, Commit)):
            return self._mutate_vote(msg, out, now)
        if isinstance(msg, (PostcPrepare, PostcCommit)):
            return self._mutate_postc_vote(msg, out, now)
        if isinstance(msg, Reply) and self._active(FaultBehavior.CORRUPT_REPLY, msg.seq, now):
            self._note(FaultBehavior.CORRUPT_REPLY, msg.seq)
            result = _flip(msg.result)
            corrupted = msg.model_copy(update={"result": result, "result_digest": digest(result)})
            return [Outbound(out.destinations, self._seal(corrupted, receivers=out.destinations), out.tag)]
        return [out]

    def _mutate_pre_prepare(self, msg: PrePrepare, out: Outbound, now: int) -> List[Outbound]:
        seq = msg.seq
        mutated = msg
        if not msg.request.is_null:
            vpre = msg.payload.segment(NdType.VPRE)
            if vpre is not None and self._active(FaultBehavior.WRONG_VPRE_VALUE, seq, now):
                self._note(FaultBehavior.WRONG_VPRE_VALUE, seq)
                segments = tuple(
                    s.model_copy(update={"data": _flip(s.data)}) if s.nd_type == NdType.VPRE else s
                    for s in msg.payload.segments
                )
                mutated = mutated.model_copy(update={"payload": msg.payload.model_copy(update={"segments": segments})})
            if self._active(FaultBehavior.WRONG_ND_TYPE, seq, now):
                self._note(FaultBehavior.WRONG_ND_TYPE, seq)
                mutated = mutated.model_copy(update={"mask": mutated.mask ^ NdType.NPOST})

        records = tuple(self._mutate_record(r, now) for r in msg.piggyback)
        if any(a is not b for a, b in zip(records, msg.piggyback)):
            mutated = mutated.model_copy(update={"piggyback": records})

        if self._active(FaultBehavior.EQUIVOCATE_PRE_PREPARE, seq, now) and not msg.request.is_null:
            self._note(FaultBehavior.EQUIVOCATE_PRE_PREPARE, seq)
            backups = sorted(out.destinations, key=lambda a: a.index)
            group_a = tuple(backups[: len(backups) // 2])
            group_b = tuple(backups[len(backups) // 2:])
            conflicting = PrePrepare(
                view=msg.view, seq=seq, sender=msg.sender, epoch=msg.epoch, request=Request.null(seq)
            )
            self.mutated[seq] = conflicting
            self.equivocated[seq] = set(group_b)
            outputs = [Outbound(group_b, self._seal(conflicting), out.tag)]
            if group_a:
                data = out.data if mutated is msg else self._seal(mutated)
                outputs.insert(0, Outbound(group_a, data, out.tag))
            return outputs

        if mutated is msg:
            return [out]
        self.mutated[seq] = mutated
        return [Outbound(out.destinations, self._seal(mutated), out.tag)]

    def _mutate_record(self, record: PostndRecord, now: int) -> PostndRecord:
        seq = record.seq
        cached = self.mutated_records.get(seq)
        if cached is not None:
            return cached
        slot = self.inner.slots.get(seq)
        if slot is None or slot.request is None:
            return record

        app = self.inner.app
        recorded = record.payload
        mutated = record
        if self._active(FaultBehavior.WRONG_POSTND_VALUES, seq, now):
            self._note(FaultBehavior.WRONG_POSTND_VALUES, seq)
            mutated = mutated.model_copy(update={"values": app.adversarial_values(slot.request, recorded).segments})
        if self._active(FaultBehavior.DEADLOCK_ORDER, seq, now):
            forged = app.forge_deadlock_order(slot.request, recorded)
            if forged is not None:
                self._note(FaultBehavior.DEADLOCK_ORDER, seq)
                mutated = mutated.model_copy(update={"values": forged.segments})
        if self._active(FaultBehavior.CRASH_ORDER, seq, now):
            forged = app.forge_stalling_order(slot.request, recorded)
            if forged is not None:
                self._note(FaultBehavior.CRASH_ORDER, seq)
                mutated = mutated.model_copy(update={"values": forged.segments})
        if self._active(FaultBehavior.WRONG_REPLY_DIGEST, seq, now):
            self._note(FaultBehavior.WRONG_REPLY_DIGEST, seq)
            mutated = mutated.model_copy(update={"reply_digest": _flip(mutated.reply_digest)})

        if mutated is not record:
            self.mutated_records[seq] = mutated
        return mutated

    def _mutate_decision(self, msg: PpuDecision, out: Outbound, now: int) -> List[Outbound]:
        if self._active(FaultBehavior.OMIT_PPU_DECISION, msg.seq, now):
            self._note(FaultBehavior.OMIT_PPU_DECISION, msg.seq)
            return []
        if not self._active(FaultBehavior.FORGE_PPU_ENTRY, msg.seq, now):
            return [out]
        self._note(FaultBehavior.FORGE_PPU_ENTRY, msg.seq)
        entries = list(msg.entries)
        for i, entry in enumerate(entries):
            if entry.proposer != msg.sender:
                bad_tag = AuthTag(mode=entry.tag.mode, entries=tuple(_flip(t) for t in entry.tag.entries))
                entries[i] = entry.model_copy(update={"tag": bad_tag})
                break
        return [Outbound(out.destinations, self._seal(msg.model_copy(update={"entries": tuple(entries)})), out.tag)]

    def _mutate_contribution(self, msg: PpuContrib, out: Outbound, now: int) -> List[Outbound]:
        if self._active(FaultBehavior.OMIT_PPU_DECISION, msg.seq, now):
            self._note(FaultBehavior.OMIT_PPU_DECISION, msg.seq)
            return []
        if self._active(FaultBehavior.FORGE_PPU_ENTRY, msg.seq, now):
            self._note(FaultBehavior.FORGE_PPU_ENTRY, msg.seq)
            bad_tag = AuthTag(mode=msg.share_tag.mode, entries=tuple(_flip(t) for t in msg.share_tag.entries))
            return [Outbound(out.destinations, self._seal(msg.model_copy(update={"share_tag": bad_tag})), out.tag)]
        return [out]

    def _fake_vote_key(self, seq: int) -> Optional[VoteKey]:
        mutated = self.mutated.get(seq)
        if mutated is None:
            return None
        decision = ()
        if not mutated.request.is_null:
            state = self.inner.nd.ppu.get(seq)
            decision = state.decision if state is not None and state.decision else ()
        return digest(encode_request(mutated.request)), nd_digest(mutated, decision)

    def _mutate_vote(self, msg, out: Outbound, now: int) -> List[Outbound]:
        seq = msg.seq
        if self.inner.is_primary:
            fake = self._fake_vote_key(seq)
            if fake is None:
                return [out]
            original = (msg.request_digest, msg.nd_digest)
            self.vote_translation[(seq, fake)] = original
            lied = self._seal(msg.model_copy(update={"request_digest": fake[0], "nd_digest": fake[1]}))
            group_b = self.equivocated.get(seq)
            if group_b is None:
                return [Outbound(out.destinations, lied, out.tag)]
            honest = tuple(d for d in out.destinations if d not in group_b)
            fooled = tuple(d for d in out.destinations if d in group_b)
            outputs = [Outbound(fooled, lied, out.tag)]
            if honest:
                outputs.insert(0, Outbound(honest, out.data, out.tag))
            return outputs

        for behavior in VOTE_FAULTS:
            if self._active(behavior, seq, now):
                self._note(behavior, seq)
                corrupted = msg.model_copy(update={"nd_digest": _flip(msg.nd_digest)})
                return [Outbound(out.destinations, self._seal(corrupted), out.tag)]
        return [out]

    def _mutate_postc_vote(self, msg, out: Outbound, now: int) -> List[Outbound]:
        seq = msg.seq
        if self.inner.is_primary:
            record = self.mutated_records.get(seq)
            if record is None:
                return [out]
            fake = digest(encode_record(record))
            return [Outbound(out.destinations, self._seal(msg.model_copy(update={"postnd_digest": fake})), out.tag)]
        for behavior in RECORD_FAULTS:
            if self._active(behavior, seq, now):
                self._note(behavior, seq)
                corrupted = msg.model_copy(update={"postnd_digest": _flip(msg.postnd_digest)})
                return [Outbound(out.destinations, self._seal(corrupted), out.tag)]
        return [out]
