from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import ValidationError

from core.errors import ConfigurationError
from models.scenario import SCHEMA_VERSION, Scenario
from utils.logging_config import get_logger
from utils.settings import get_settings

logger = get_logger(__name__)

# Sections of replica_config.yaml that seed every scenario.
DEFAULT_SECTIONS = ("protocol", "delay", "cpu")


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _read_yaml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigurationError(f"cannot read {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} does not contain a mapping")
    return data


def load_protocol_defaults(path: Optional[Path] = None) -> Dict[str, Any]:
    """Protocol, delay and CPU defaults from replica_config.yaml (empty if absent)."""
    path = Path(path or get_settings().protocol_config)
    if not path.exists():
        logger.debug("protocol_defaults_missing", path=str(path))
        return {}
    data = _read_yaml(path)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(f"{path}: unsupported schema_version {version}")
    return {key: data[key] for key in DEFAULT_SECTIONS if key in data}


def scenario_from_dict(data: Dict[str, Any], defaults: Optional[Dict[str, Any]] = None) -> Scenario:
    """
    Validate a scenario mapping on top of the protocol defaults.

    Raises:
        ConfigurationError: On any schema violation
    """
    if defaults is None:
        defaults = load_protocol_defaults()
    try:
        return Scenario.model_validate(_merge(defaults, data))
    except ValidationError as e:
        raise ConfigurationError(f"invalid scenario {data.get('name', '?')!r}: {e}") from e


def load_scenario(path: Union[str, Path], defaults: Optional[Dict[str, Any]] = None) -> Scenario:
    path = Path(path)
    data = _read_yaml(path)
    data.setdefault("name", path.stem)
    scenario = scenario_from_dict(data, defaults)
    logger.debug("scenario_loaded", name=scenario.name, path=str(path))
    return scenario


def list_scenarios(directory: Optional[Path] = None) -> List[Path]:
    directory = Path(directory or get_settings().scenario_dir)
    return sorted(directory.glob("*.yaml"))


def load_suite(directory: Optional[Path] = None) -> List[Scenario]:
    """Every scenario file of ``directory``, sorted by file name."""
    defaults = load_protocol_defaults()
    return [load_scenario(path, defaults) for path in list_scenarios(directory)]
