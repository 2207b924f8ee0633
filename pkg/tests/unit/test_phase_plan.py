import pytest

from core.errors import InvalidMaskError
from models.payload import NdType, mask_name, parse_mask
from services.nd_controller import plan_phases


def test_deterministic_request_adds_nothing():
    plan = plan_phases(0)
    assert not any(plan.model_dump().values())


@pytest.mark.parametrize(
    "mask, values, ppu, post, verify",
    [
        (NdType.VPRE, True, False, False, False),
        (NdType.NPRE, False, True, False, False),
        (NdType.VPOST, False, False, True, True),
        (NdType.NPOST, False, False, True, False),
        (NdType.VPRE | NdType.NPOST, True, False, True, False),
        (NdType.NPRE | NdType.NPOST, False, True, True, False),
    ],
)
def test_plan_per_mask(mask, values, ppu, post, verify):
    plan = plan_phases(int(mask))
    assert plan.carries_values_in_pre_prepare is values
    assert plan.needs_ppu_phase is ppu
    assert plan.needs_post_commit is post
    assert plan.verify_post_values is verify


@pytest.mark.parametrize("mask", [0x10, 0x80, 0xFF, 0x100])
def test_reserved_bits_rejected(mask):
    with pytest.raises(InvalidMaskError):
        plan_phases(mask)


def test_mask_names_round_trip():
    assert mask_name(0) == "0"
    assert mask_name(NdType.VPRE | NdType.NPOST) == "VPRE|NPOST"
    assert parse_mask("npre|npost") == int(NdType.NPRE | NdType.NPOST)
    assert parse_mask("0x0c") == int(NdType.VPOST | NdType.NPOST)
    with pytest.raises(ValueError):
        parse_mask("SOMETIMES")
    with pytest.raises(ValueError):
        parse_mask("0x10")
