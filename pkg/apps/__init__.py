from typing import Any, Dict, Type

from core.errors import ConfigurationError

from .base_app import CheckVerdict, ExecutionResult, ReplicatedApp, npre_combine, replay_equivalent, request_digest
from .composite_app import CompositeApp
from .npost_counter_app import NpostCounterApp
from .npre_lottery_app import NpreLotteryApp
from .synthetic_app import SyntheticApp
from .vpost_taskgraph_app import VpostTaskgraphApp
from .vpre_rand_app import VpreRandApp

APP_REGISTRY: Dict[str, Type[ReplicatedApp]] = {
    cls.name: cls
    for cls in (
        SyntheticApp,
        VpreRandApp,
        NpreLotteryApp,
        VpostTaskgraphApp,
        NpostCounterApp,
        CompositeApp,
    )
}


def app_class(name: str) -> Type[ReplicatedApp]:
    try:
        return APP_REGISTRY[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown application {name!r}; choose one of {sorted(APP_REGISTRY)}"
        ) from None


def create_app(name: str, replica_id: int, secret: bytes, **options: Any) -> ReplicatedApp:
    """Instantiate a registered application for one replica."""
    try:
        return app_class(name)(replica_id, secret, **options)
    except TypeError as e:
        raise ConfigurationError(f"invalid options for application {name!r}: {e}") from e


__all__ = [
    "APP_REGISTRY",
    "CheckVerdict",
    "ExecutionResult",
    "ReplicatedApp",
    "npre_combine",
    "replay_equivalent",
    "request_digest",
    "app_class",
    "create_app",
    "CompositeApp",
    "NpostCounterApp",
    "NpreLotteryApp",
    "SyntheticApp",
    "VpostTaskgraphApp",
    "VpreRandApp",
]
