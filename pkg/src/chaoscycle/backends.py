"""Execution backends: the in-repo simulator and the live-cluster adapter
surface (dry-run validation only)."""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Mapping, Optional

from .compiler import ExperimentPlan, WorkflowNode
from .domain import (
    Duration,
    ExperimentResult,
    Fault,
    SteadyState,
    ThresholdSpec,
    VaCOutcome,
)
from .manifests import SystemSnapshot
from .simulator import (
    ClusterModel,
    Timeline,
    build_cluster,
    simulate,
)
from .vac import evaluate_threshold, trace_from_values
from .faults import validate_fault


class BackendError(RuntimeError):
    pass


class ExecutionBackend(ABC):
    """What the orchestrator needs from an experiment executor."""

    @abstractmethod
    def deploy(self, snapshot: SystemSnapshot) -> None: ...

    @abstractmethod
    def dry_run(self, fault: Fault) -> Optional[str]:
        """None when the fault would apply cleanly; otherwise the error text."""

    @abstractmethod
    def measure_baseline(self, state: "SteadyStateProbe", window: Duration) -> VaCOutcome: ...

    @abstractmethod
    def run(
        self,
        tree: WorkflowNode,
        plan: ExperimentPlan,
        thresholds: Mapping[str, ThresholdSpec],
        seed: int,
    ) -> tuple[Timeline, ExperimentResult]: ...


class SteadyStateProbe:
    """Probe + threshold pair used for baseline inspection."""

    def __init__(self, name: str, vac, threshold: ThresholdSpec):
        self.name = name
        self.vac = vac
        self.threshold = threshold


class SimulatorBackend(ExecutionBackend):
    """Default backend: deploys into the discrete-event cluster model."""

    def __init__(self, restart_delay: int = 3, cold_start_delay: int = 300):
        self.restart_delay = restart_delay
        self.cold_start_delay = cold_start_delay
        self._snapshot: Optional[SystemSnapshot] = None

    def deploy(self, snapshot: SystemSnapshot) -> None:
        self._snapshot = snapshot

    def _fresh_cluster(self) -> ClusterModel:
        if self._snapshot is None:
            raise BackendError("deploy a snapshot before running")
        return build_cluster(
            self._snapshot,
            restart_delay=self.restart_delay,
            cold_start_delay=self.cold_start_delay,
        )

    def dry_run(self, fault: Fault) -> Optional[str]:
        violations, _ = validate_fault(fault)
        if violations:
            return "; ".join(str(v) for v in violations)
        cluster = self._fresh_cluster()
        if not cluster.pods_matching(fault.scope):
            return (
                f"{fault.kind.value} selector matches no pods "
                f"(namespaces={list(fault.scope.namespaces)}, labels={dict(fault.scope.label_selectors)})"
            )
        return None

    def measure_baseline(self, probe: SteadyStateProbe, window: Duration = Duration(5)) -> VaCOutcome:
        from .simulator import _sample_metric  # same sampling path as experiment runs

        cluster = self._fresh_cluster()
        values = []
        for t in range(window.seconds):
            cluster.tick(t)
            values.append(_sample_metric(cluster, probe.vac, probe.threshold.metric))
        trace = trace_from_values(probe.name, values)
        return evaluate_threshold(probe.threshold, trace)

    def run(
        self,
        tree: WorkflowNode,
        plan: ExperimentPlan,
        thresholds: Mapping[str, ThresholdSpec],
        seed: int,
    ) -> tuple[Timeline, ExperimentResult]:
        cluster = self._fresh_cluster()
        stage_times = [plan.pre_time, plan.fault_time, plan.post_time]
        timeline, outcomes = simulate(tree, cluster, thresholds, seed=seed, stage_times=stage_times)
        result = ExperimentResult(
            scheduled=tuple(o.name for o in outcomes),
            outcomes={o.name: o for o in outcomes},
        )
        return timeline, result


class LiveBackend(ExecutionBackend):
    """Adapter surface for a real cluster: validates what it can, never runs.

    Deploy/run require cluster credentials and a workflow controller; this
    build ships the interface plus dry-run checks so plans can be vetted
    offline.
    """

    def __init__(self) -> None:
        self._snapshot: Optional[SystemSnapshot] = None

    def deploy(self, snapshot: SystemSnapshot) -> None:
        self._snapshot = snapshot

    def dry_run(self, fault: Fault) -> Optional[str]:
        violations, _ = validate_fault(fault)
        if violations:
            return "; ".join(str(v) for v in violations)
        return None

    def measure_baseline(self, probe: SteadyStateProbe, window: Duration = Duration(5)) -> VaCOutcome:
        raise BackendError("live backend cannot measure baselines in this build; use the simulator")

    def run(
        self,
        tree: WorkflowNode,
        plan: ExperimentPlan,
        thresholds: Mapping[str, ThresholdSpec],
        seed: int,
    ) -> tuple[Timeline, ExperimentResult]:
        raise BackendError("live backend execution is not available in this build; use the simulator")


def make_backend(name: str, restart_delay: int = 3, cold_start_delay: int = 300) -> ExecutionBackend:
    if name == "simulator":
        return SimulatorBackend(restart_delay=restart_delay, cold_start_delay=cold_start_delay)
    if name == "live":
        return LiveBackend()
    raise BackendError(f"unknown backend {name!r}")
