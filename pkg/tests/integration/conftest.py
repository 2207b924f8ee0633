import json
from typing import Any, Dict, List, Optional, Tuple

import pytest

from models.scenario import Scenario
from simnet.scenarios import load_protocol_defaults, load_scenario, scenario_from_dict
from utils.settings import get_settings


def synthetic_scenario(
    mask: str,
    clients: int = 1,
    requests: int = 8,
    optimized: bool = True,
    overrides: Optional[Dict[str, Any]] = None,
    **workload: Any,
) -> Scenario:
    data: Dict[str, Any] = {
        "name": f"synthetic-{mask}",
        "app": {"name": "synthetic", "options": {"mask": mask}},
        "workload": {"clients": clients, "requests_per_client": requests, **workload},
        **(overrides or {}),
    }
    scenario = scenario_from_dict(data, load_protocol_defaults())
    return scenario.model_copy(update={"protocol": scenario.protocol.with_optimizations(optimized)})


def client_histories(trace: List[str]) -> Dict[int, List[Tuple[str, str]]]:
    """Per replica, the (request, result) digests of every non-null delivery in seq order."""
    histories: Dict[int, List[Tuple[str, str]]] = {}
    for line in trace:
        event = json.loads(line)
        if event["kind"] == "delivered" and not event["null"]:
            histories.setdefault(event["replica"], []).append((event["request"], event["result"]))
    return histories


@pytest.fixture
def shipped():
    """Load a scenario shipped in the scenario directory by file stem."""
    directory = get_settings().scenario_dir

    def load(stem: str) -> Scenario:
        return load_scenario(directory / f"{stem}.yaml")

    return load


@pytest.fixture
def synthetic():
    return synthetic_scenario


@pytest.fixture
def histories():
    return client_histories
