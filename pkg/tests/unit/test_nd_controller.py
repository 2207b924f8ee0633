import random

import pytest

from apps import NpostCounterApp, create_app
from core.codec import encode, encode_request, encode_share_statement
from core.crypto import authenticate, digest
from models.auth import Address, AuthMode
from models.message import MessageTag, NdValues, PpuContrib, PpuDecision, PrePrepare, Request, RequestMessage
from models.payload import DecisionEntry, NdPayload, NdSegment, NdType, PostndRecord
from models.scenario import ProtocolConfig
from models.slot import SuspicionReason
from services.replica_engine import Replica

PRIMARY = Address.replica(0)
SECRETS = {i: f"r{i}".encode() for i in range(4)}


@pytest.fixture
def ticket():
    return Request(client=0, request_id=1, op=b"ticket")


def _share(replica: int, request: Request) -> bytes:
    return create_app("npre_lottery", replica, SECRETS[replica]).npre_share(request)


def _entry(keyring, replica: int, request: Request, with_value: bool = False) -> DecisionEntry:
    share = _share(replica, request)
    statement = encode_share_statement(0, 1, digest(encode_request(request)), replica, digest(share))
    tag = authenticate(Address.replica(replica), statement, keyring, AuthMode.SIGNATURE)
    return DecisionEntry(proposer=replica, value=share if with_value else None, value_digest=digest(share), tag=tag)


def _npre_pre_prepare(keyring, request: Request) -> PrePrepare:
    client_auth = authenticate(
        Address.client(0), encode(RequestMessage(request=request)), keyring, AuthMode.AUTHENTICATOR
    )
    return PrePrepare(
        view=0, seq=1, sender=0, request=request, client_auth=client_auth, mask=NdType.NPRE,
        payload=NdPayload(segments=(NdSegment(nd_type=NdType.NPRE, data=_share(0, request)),)),
    )


@pytest.fixture
def lottery_backup(keyring):
    return Replica(1, 1, create_app("npre_lottery", 1, SECRETS[1]), keyring)


def _tags(outbox):
    return [m.tag for m in outbox.messages]


def _decision(keyring, request, proposers=(0, 1, 2)):
    return PpuDecision(
        view=0, seq=1, sender=0, request_digest=digest(encode_request(request)),
        entries=tuple(_entry(keyring, p, request) for p in proposers),
    )


def test_backup_contributes_its_share(lottery_backup, keyring, sealer, ticket):
    out = lottery_backup.on_message(sealer(keyring, PRIMARY, _npre_pre_prepare(keyring, ticket)), 0)

    assert _tags(out) == [MessageTag.PPU_CONTRIB]
    assert set(out.messages[0].destinations) == {Address.replica(i) for i in (0, 2, 3)}


def test_backup_fetches_missing_share_values(lottery_backup, keyring, sealer, ticket):
    lottery_backup.on_message(sealer(keyring, PRIMARY, _npre_pre_prepare(keyring, ticket)), 0)

    out = lottery_backup.on_message(sealer(keyring, PRIMARY, _decision(keyring, ticket)), 1)
    assert _tags(out) == [MessageTag.FETCH_ND]
    assert lottery_backup.nd.ppu[1].missing == {2}

    values = NdValues(
        view=0, seq=1, sender=0, request_digest=digest(encode_request(ticket)),
        entries=(_entry(keyring, 2, ticket, with_value=True),),
    )
    out = lottery_backup.on_message(sealer(keyring, PRIMARY, values), 2)
    assert _tags(out) == [MessageTag.PREPARE]
    assert [e.proposer for e in lottery_backup.nd.decision_for(1)] == [0, 1, 2]
    assert not lottery_backup.suspicions


def test_known_contributions_resolve_without_fetching(lottery_backup, keyring, sealer, ticket):
    lottery_backup.on_message(sealer(keyring, PRIMARY, _npre_pre_prepare(keyring, ticket)), 0)
    entry = _entry(keyring, 2, ticket, with_value=True)
    contribution = PpuContrib(
        view=0, seq=1, sender=2, request_digest=digest(encode_request(ticket)), share=entry.value,
        share_tag=entry.tag,
    )
    lottery_backup.on_message(sealer(keyring, Address.replica(2), contribution), 1)

    out = lottery_backup.on_message(sealer(keyring, PRIMARY, _decision(keyring, ticket)), 2)

    assert _tags(out) == [MessageTag.PREPARE]


@pytest.mark.parametrize(
    "proposers",
    [(0, 1), (0, 1, 2, 3), (1, 2, 3), (0, 2, 1)],
    ids=["too_small", "too_large", "without_primary", "unsorted"],
)
def test_malformed_decision_sets_are_rejected(lottery_backup, keyring, sealer, ticket, proposers):
    lottery_backup.on_message(sealer(keyring, PRIMARY, _npre_pre_prepare(keyring, ticket)), 0)

    out = lottery_backup.on_message(sealer(keyring, PRIMARY, _decision(keyring, ticket, proposers)), 1)

    assert MessageTag.PREPARE not in _tags(out)
    assert [s.reason for s in lottery_backup.suspicions] == [SuspicionReason.ND_VALUE_REJECTED]


def test_decision_with_forged_share_tag_is_rejected(lottery_backup, keyring, sealer, ticket):
    lottery_backup.on_message(sealer(keyring, PRIMARY, _npre_pre_prepare(keyring, ticket)), 0)
    decision = _decision(keyring, ticket)
    forged = decision.entries[2].model_copy(update={"value_digest": digest(b"chosen by the primary")})
    decision = decision.model_copy(update={"entries": decision.entries[:2] + (forged,)})

    lottery_backup.on_message(sealer(keyring, PRIMARY, decision), 1)

    assert [s.reason for s in lottery_backup.suspicions] == [SuspicionReason.ND_VALUE_REJECTED]


def test_npre_pre_prepare_without_share_is_rejected(lottery_backup, keyring, sealer, ticket):
    pp = _npre_pre_prepare(keyring, ticket).model_copy(update={"payload": NdPayload()})

    lottery_backup.on_message(sealer(keyring, PRIMARY, pp), 0)

    assert [s.reason for s in lottery_backup.suspicions] == [SuspicionReason.ND_VALUE_REJECTED]


def test_post_values_in_pre_prepare_are_a_type_mismatch(keyring, sealer):
    backup = Replica(1, 1, create_app("synthetic", 1, b"r1", mask="NPOST"), keyring)
    request = Request(client=0, request_id=1, op=b"op")
    pp = PrePrepare(
        view=0, seq=1, sender=0, request=request, mask=NdType.NPOST,
        client_auth=authenticate(Address.client(0), encode(RequestMessage(request=request)), keyring),
        payload=NdPayload(segments=(NdSegment(nd_type=NdType.NPOST, data=b"early"),)),
    )

    backup.on_message(sealer(keyring, PRIMARY, pp), 0)

    assert [s.reason for s in backup.suspicions] == [SuspicionReason.ND_TYPE_MISMATCH]


def test_primary_proposal_keeps_pre_determinable_values_only(keyring):
    primary = Replica(0, 1, create_app("synthetic", 0, b"r0", mask="VPRE|VPOST"), keyring)

    mask, payload = primary.nd.primary_propose(1, Request(client=0, request_id=1, op=b"op"))

    assert mask == NdType.VPRE | NdType.VPOST
    assert payload.classes == NdType.VPRE


@pytest.mark.parametrize("piggyback", [True, False])
def test_piggyback_record_shapes_are_checked(keyring, sealer, piggyback):
    config = ProtocolConfig(piggyback=piggyback)
    backup = Replica(1, 1, create_app("synthetic", 1, b"r1"), keyring, config)
    null = Request.null(2)
    record = PostndRecord(seq=3, reply_digest=digest(b"reply"))
    pp = PrePrepare(view=0, seq=2, sender=0, request=null, piggyback=(record,))

    backup.on_message(sealer(keyring, PRIMARY, pp), 0)

    assert [s.reason for s in backup.suspicions] == [SuspicionReason.BAD_ORDER]


@pytest.mark.parametrize("optimized", [True, False])
def test_post_determined_values_reach_agreement(cluster_factory, optimized):
    config = ProtocolConfig().with_optimizations(optimized)
    cluster = cluster_factory(f=1, app="npost_counter", clients=1, config=config, cells=4)
    options = {"threads": 3, "ops_per_thread": 4, "cells": 4}
    ops = [NpostCounterApp.generate_operation(random.Random(i), 0, options) for i in range(3)]
    cluster.start_clients({0: ops})

    cluster.run()

    paths = {e["path"] for e in cluster.trace.of_kind("postnd_disseminated")}
    assert paths <= ({"piggyback", "null_request"} if optimized else {"standalone"})
    histories = [[(e["seq"], e["nd"], e["result"]) for e in cluster.delivered(r)] for r in range(cluster.n)]
    assert all(h == histories[0] for h in histories)
    assert len(cluster.clients[0].finished) == 3
    assert not cluster.suspicions()
