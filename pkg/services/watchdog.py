from enum import Enum
from typing import List, Optional

import networkx as nx
from pydantic import BaseModel, ConfigDict

from apps.base_app import ExecutionResult, ReplicatedApp
from core.errors import ReplayStalled
from models.message import Request
from models.payload import NdPayload
from utils.logging_config import get_logger

logger = get_logger(__name__)


class ExecutionFailure(str, Enum):
    DEADLOCK = "deadlock"
    BUDGET_EXHAUSTED = "budget_exhausted"
    CRASH = "crash"


class ExecutionOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    result: Optional[ExecutionResult] = None
    failure: Optional[ExecutionFailure] = None
    consumed_us: int = 0
    cycle: Optional[List[str]] = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.failure is None


def find_wait_cycle(edges) -> Optional[List[str]]:
    """Threads on a wait-for cycle, or None when the relation is acyclic."""
    if not edges:
        return None
    graph = nx.DiGraph()
    graph.add_edges_from(edges)
    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        return None
    return [u for u, _ in cycle]


class Watchdog:
    """
    Execution monitor for one replica.

    Replayed orders are first checked for lock cycles. Execution then runs
    against a simulated-time budget; a replay that cannot progress consumes
    the whole budget. Any failure restores the last snapshot.
    """

    def __init__(self, budget_us: int):
        self.budget_us = budget_us
        self.stats = {"executions": 0, "deadlocks": 0, "restarts": 0}

    def guarded_execute(
        self,
        app: ReplicatedApp,
        seq: int,
        request: Request,
        resolved: NdPayload,
        snapshot: bytes,
        replay: bool,
        view: int = 0,
    ) -> ExecutionOutcome:
        """
        Execute ``request`` under supervision.

        Args:
            app: Application instance of this replica
            seq: Sequence number being delivered
            request: The ordered request
            resolved: Agreed nondeterministic data
            snapshot: State to restore on failure
            replay: Whether post-determined values are being replayed

        Returns:
            ExecutionOutcome with the result or the failure kind
        """
        self.stats["executions"] += 1

        if replay:
            cycle = find_wait_cycle(app.wait_for_edges(request, resolved))
            if cycle:
                self.stats["deadlocks"] += 1
                return ExecutionOutcome(failure=ExecutionFailure.DEADLOCK, cycle=cycle)

        try:
            result = app.execute(seq, request, resolved, view)
        except ReplayStalled as e:
            return self._restart(app, snapshot, ExecutionFailure.BUDGET_EXHAUSTED, self.budget_us, str(e))
        except Exception as e:
            return self._restart(app, snapshot, ExecutionFailure.CRASH, 0, str(e))

        if result.cost_us > self.budget_us:
            return self._restart(
                app, snapshot, ExecutionFailure.BUDGET_EXHAUSTED, self.budget_us,
                f"execution needed {result.cost_us}us",
            )
        return ExecutionOutcome(result=result, consumed_us=result.cost_us)

    def _restart(
        self, app: ReplicatedApp, snapshot: bytes, failure: ExecutionFailure, consumed_us: int, detail: str
    ) -> ExecutionOutcome:
        app.restore(snapshot)
        self.stats["restarts"] += 1
        logger.debug("execution_aborted", failure=failure.value, detail=detail)
        return ExecutionOutcome(failure=failure, consumed_us=consumed_us, detail=detail)
