"""Planner interface between the cycle orchestrator and whatever proposes
hypotheses, schedules, analyses, and reconfigurations."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from ..domain import (
    Duration,
    Fault,
    FaultKind,
    Hypothesis,
    SelectorSpec,
    SteadyState,
    ThresholdSpec,
    VaCSpec,
)
from ..manifests import ChangeSummary, ReconfigAction, SystemSnapshot
from .loop import Attempt


@dataclass(frozen=True)
class Weakness:
    name: str
    details: str
    manifests: tuple[str, ...]
    problematic_config: str
    tag: str  # machine hint: restart-policy | single-replica | no-resource-limits | ...


@dataclass
class CycleContext:
    """Phase-0 output: explicit context distilled from the user input."""

    snapshot: SystemSnapshot
    instructions: str
    summaries: dict[str, str] = field(default_factory=dict)
    weaknesses: list[Weakness] = field(default_factory=list)
    application: str = ""


@dataclass(frozen=True)
class SteadyStateDraft:
    """A steady state before its baseline is measured and script rendered."""

    name: str
    description: str
    threshold: ThresholdSpec
    vac: VaCSpec
    vus: int = 1


@dataclass(frozen=True)
class FaultSketch:
    kind: FaultKind
    name_id: int
    scope_hint: Mapping[str, str]


@dataclass(frozen=True)
class ScenarioDraft:
    event: str
    description: str
    groups: tuple[tuple[FaultSketch, ...], ...]


@dataclass(frozen=True)
class StageTimes:
    total: Duration
    pre: Duration
    fault: Duration
    post: Duration


@dataclass(frozen=True)
class ScheduleEntry:
    """Raw schedule row before payload attachment: names reference steady
    states; fault rows reference scenario faults by (kind, name_id)."""

    name: str
    grace_period: Duration
    duration: Duration
    is_fault: bool = False
    fault_ref: Optional[tuple[FaultKind, int]] = None


class Planner(ABC):
    """What the orchestrator needs from any planning implementation."""

    @abstractmethod
    def fill_context(self, snapshot: SystemSnapshot, instructions: str) -> CycleContext: ...

    @abstractmethod
    def draft_steady_state(
        self,
        context: CycleContext,
        defined: Sequence[SteadyState],
        transcript: Sequence[Attempt],
    ) -> SteadyStateDraft: ...

    @abstractmethod
    def needs_more_steady_states(self, context: CycleContext, defined: Sequence[SteadyState]) -> bool: ...

    @abstractmethod
    def draft_scenario(self, context: CycleContext, states: Sequence[SteadyState]) -> ScenarioDraft: ...

    @abstractmethod
    def detail_fault(
        self,
        context: CycleContext,
        states: Sequence[SteadyState],
        sketch: FaultSketch,
        transcript: Sequence[Attempt],
    ) -> Fault: ...

    @abstractmethod
    def plan_stage_times(self, context: CycleContext, hypothesis: Hypothesis) -> StageTimes: ...

    @abstractmethod
    def plan_stage_schedule(
        self,
        context: CycleContext,
        hypothesis: Hypothesis,
        stage: str,
        stage_time: Duration,
        transcript: Sequence[Attempt],
    ) -> list[ScheduleEntry]: ...

    @abstractmethod
    def summarize_plan(self, context: CycleContext, plan_json: Mapping) -> str: ...

    @abstractmethod
    def analyze(
        self,
        context: CycleContext,
        hypothesis: Hypothesis,
        plan_summary: str,
        failed: Sequence[tuple[str, str]],
    ) -> str: ...

    @abstractmethod
    def reconfigure(
        self,
        context: CycleContext,
        hypothesis: Hypothesis,
        report: str,
        history: Sequence[Sequence[ReconfigAction]],
        transcript: Sequence[Attempt],
    ) -> list[ReconfigAction]: ...

    @abstractmethod
    def adjust_fault_scope(self, diff: ChangeSummary, fault: Fault, new_snapshot: SystemSnapshot) -> SelectorSpec: ...

    @abstractmethod
    def adjust_vac(
        self,
        diff: ChangeSummary,
        state: SteadyState,
        new_snapshot: SystemSnapshot,
    ) -> Optional[VaCSpec]: ...

    @abstractmethod
    def summarize_cycle(self, context: CycleContext, history_text: str) -> str: ...
