from .client_library import BftClient
from .nd_controller import NdController, PhasePlan, plan_phases
from .outbox import Outbox
from .replica_engine import Replica
from .watchdog import Watchdog

__all__ = ["BftClient", "NdController", "PhasePlan", "Outbox", "Replica", "Watchdog", "plan_phases"]
