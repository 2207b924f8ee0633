import pytest
import yaml

from core.errors import ConfigurationError
from models.message import MessageTag
from models.scenario import FaultBehavior, Trigger
from simnet.scenarios import list_scenarios, load_protocol_defaults, load_scenario, load_suite, scenario_from_dict
from utils.settings import get_settings


def _write(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return path


def test_shipped_defaults_are_loaded():
    defaults = load_protocol_defaults()

    assert set(defaults) == {"protocol", "delay", "cpu"}
    assert defaults["protocol"]["flush_timer_us"] == 10_000


def test_every_shipped_scenario_validates():
    scenarios = load_suite()

    assert len(scenarios) == len(list_scenarios()) >= 15
    names = {s.name for s in scenarios}
    assert {"vpre_fault_free", "npost_fault_free", "faulty_primary_deadlock_order"} <= names
    for scenario in scenarios:
        assert len(scenario.faulty_replicas) <= scenario.f


def test_scenario_overrides_merge_onto_defaults(tmp_path):
    path = _write(tmp_path / "custom.yaml", {
        "f": 2,
        "app": {"name": "synthetic", "options": {"mask": "NPRE"}},
        "protocol": {"piggyback": False},
        "drops": [{"src": "replica-0", "dst": "*", "tag": "ppu_decision", "count": 2}],
    })

    scenario = load_scenario(path)

    assert scenario.name == "custom"
    assert scenario.n == 7
    assert scenario.protocol.piggyback is False
    assert scenario.protocol.flush_timer_us == 10_000
    assert scenario.delay.base_us == 100
    assert scenario.drops[0].tag == MessageTag.PPU_DECISION


def test_fault_budget_is_enforced():
    faults = [{"replica": r, "behavior": "CORRUPT_REPLY"} for r in (1, 2)]
    with pytest.raises(ConfigurationError):
        scenario_from_dict({"f": 1, "faults": faults}, defaults={})
    with pytest.raises(ConfigurationError):
        scenario_from_dict({"f": 1, "faults": [{"replica": 4, "behavior": "CRASH_REPLICA"}]}, defaults={})

    scenario = scenario_from_dict({"f": 2, "faults": faults}, defaults={})
    assert scenario.faulty_replicas == [1, 2]
    assert scenario.faults[0].behavior == FaultBehavior.CORRUPT_REPLY


@pytest.mark.parametrize("data", [
    {"unknown_key": 1},
    {"f": -1},
    {"loss": 1.5},
    {"faults": [{"replica": 0, "behavior": "MAKE_COFFEE"}]},
    {"schema_version": 2},
    {"protocol": {"auth_mode": "password"}},
])
def test_invalid_scenarios_are_configuration_errors(data):
    with pytest.raises(ConfigurationError):
        scenario_from_dict(data, defaults={})


def test_unreadable_or_non_mapping_files(tmp_path):
    with pytest.raises(ConfigurationError):
        load_scenario(tmp_path / "missing.yaml")
    listing = tmp_path / "list.yaml"
    listing.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_scenario(listing)


def test_defaults_reject_other_schema_versions(tmp_path):
    path = _write(tmp_path / "replica_config.yaml", {"schema_version": 3, "protocol": {}})
    with pytest.raises(ConfigurationError):
        load_protocol_defaults(path)
    assert load_protocol_defaults(tmp_path / "absent.yaml") == {}


def test_trigger_window():
    window = Trigger(from_seq=3, to_seq=5)
    assert [s for s in range(1, 8) if window.covers(s)] == [3, 4, 5]
    assert Trigger(from_seq=2).covers(1_000)


def test_settings_read_environment(monkeypatch):
    monkeypatch.setenv("NDBFT_LOG_LEVEL", "DEBUG")
    get_settings.cache_clear()
    try:
        assert get_settings().log_level == "DEBUG"
    finally:
        get_settings.cache_clear()
