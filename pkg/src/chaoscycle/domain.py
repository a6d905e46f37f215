"""Shared domain types for the chaos-engineering cycle. No I/O here."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Optional, Sequence


class DomainError(ValueError):
    """Invariant or precondition violation in a domain value."""


class DurationParseError(DomainError):
    pass


_DURATION_RE = re.compile(r"^(?:(\d+)h)?(?:(\d+)m)?(?:(\d+)s)?$")


@dataclass(frozen=True, order=True)
class Duration:
    """Whole-second duration with the compact h/m/s text form ("5m10s")."""

    seconds: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.seconds, int) or isinstance(self.seconds, bool):
            raise DomainError(f"duration seconds must be an integer, got {self.seconds!r}")
        if self.seconds < 0:
            raise DomainError(f"duration must be non-negative, got {self.seconds}")

    def __add__(self, other: "Duration") -> "Duration":
        return Duration(self.seconds + other.seconds)

    def __str__(self) -> str:
        return format_duration(self)

    @classmethod
    def parse(cls, text: str) -> "Duration":
        return parse_duration(text)


def parse_duration(text: str) -> Duration:
    """Parse "5m10s"-style text into a Duration.

    Accepts hours/minutes/seconds components in that order, at least one
    component required.
    """
    if not isinstance(text, str):
        raise DurationParseError(f"duration must be a string, got {text!r}")
    stripped = text.strip()
    if not stripped:
        raise DurationParseError("empty duration text")
    match = _DURATION_RE.fullmatch(stripped)
    if match is None or not any(match.groups()):
        raise DurationParseError(f"unparseable duration {text!r}")
    hours, minutes, seconds = (int(g) if g else 0 for g in match.groups())
    return Duration(hours * 3600 + minutes * 60 + seconds)


def format_duration(duration: Duration) -> str:
    """Format largest-unit-first with no zero components; 0 -> "0s"."""
    total = duration.seconds
    if total == 0:
        return "0s"
    hours, rest = divmod(total, 3600)
    minutes, seconds = divmod(rest, 60)
    parts = []
    if hours:
        parts.append(f"{hours}h")
    if minutes:
        parts.append(f"{minutes}m")
    if seconds:
        parts.append(f"{seconds}s")
    return "".join(parts)


def max_duration(*durations: Duration) -> Duration:
    return max(durations, default=Duration(0))


class Metric(str, Enum):
    READY_RATIO = "ready-ratio"
    RUNNING_RATIO = "running-ratio"
    REQUEST_FAILURE_RATE = "request-failure-rate"
    READY_REPLICAS_MIN = "ready-replicas-min"


RATIO_METRICS = frozenset({Metric.READY_RATIO, Metric.RUNNING_RATIO, Metric.REQUEST_FAILURE_RATE})
COUNT_METRICS = frozenset({Metric.READY_REPLICAS_MIN})


class Comparator(str, Enum):
    GE = ">="
    LE = "<="
    EQ = "=="

    def holds(self, measured: float, value: float) -> bool:
        if self is Comparator.GE:
            return measured >= value
        if self is Comparator.LE:
            return measured <= value
        return measured == value


@dataclass(frozen=True)
class ThresholdSpec:
    """Machine-checkable steady-state threshold over a closed metric vocabulary."""

    metric: Metric
    comparator: Comparator
    value: float
    description: str = ""

    def __post_init__(self) -> None:
        metric = Metric(self.metric)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "comparator", Comparator(self.comparator))
        if metric in RATIO_METRICS:
            if not 0.0 <= float(self.value) <= 1.0:
                raise DomainError(
                    f"ratio metric {metric.value} needs a value in [0,1], got {self.value}"
                )
        else:
            if float(self.value) != int(self.value) or self.value < 0:
                raise DomainError(
                    f"count metric {metric.value} needs a non-negative integer, got {self.value}"
                )

    def satisfied_by(self, measured: float) -> bool:
        return self.comparator.holds(measured, self.value)

    def to_json(self) -> dict[str, Any]:
        return {
            "metric": self.metric.value,
            "comparator": self.comparator.value,
            "value": self.value,
            "description": self.description,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ThresholdSpec":
        return cls(
            metric=Metric(data["metric"]),
            comparator=Comparator(data["comparator"]),
            value=data["value"],
            description=data.get("description", ""),
        )


class ProbeTool(str, Enum):
    CLUSTER_API = "cluster-api"
    LOAD_TEST = "load-test"


_INTERNAL_DNS_RE = re.compile(
    r"^http://[a-z0-9][a-z0-9-]*\.[a-z0-9][a-z0-9-]*\.svc\.cluster\.local:\d+(/.*)?$"
)


@dataclass(frozen=True)
class ProbeTarget:
    """What a VaC probe inspects: one named/labelled resource, or a request URL."""

    namespace: str = "default"
    kind: str = ""
    name: str = ""
    label_selectors: Mapping[str, str] = field(default_factory=dict)
    url: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "label_selectors", dict(self.label_selectors))

    def to_json(self) -> dict[str, Any]:
        return {
            "namespace": self.namespace,
            "kind": self.kind,
            "name": self.name,
            "labelSelectors": dict(self.label_selectors),
            "url": self.url,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ProbeTarget":
        return cls(
            namespace=data.get("namespace", "default"),
            kind=data.get("kind", ""),
            name=data.get("name", ""),
            label_selectors=data.get("labelSelectors", {}),
            url=data.get("url", ""),
        )


@dataclass(frozen=True)
class VaCSpec:
    """Validation-as-code probe: tool, target, and the rendered script location."""

    tool: ProbeTool
    target: ProbeTarget
    script_path: str
    sample_interval: Duration = Duration(1)
    version: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "tool", ProbeTool(self.tool))
        if self.tool is ProbeTool.LOAD_TEST:
            if not _INTERNAL_DNS_RE.match(self.target.url):
                raise DomainError(
                    "load-test targets must be internal-DNS URLs of the form "
                    f"http://service.namespace.svc.cluster.local:port, got {self.target.url!r}"
                )
        else:
            if not self.target.kind:
                raise DomainError("cluster-api targets must name exactly one resource kind")
        if self.version < 0:
            raise DomainError("vac version must be non-negative")

    def to_json(self) -> dict[str, Any]:
        return {
            "tool": self.tool.value,
            "target": self.target.to_json(),
            "script_path": self.script_path,
            "sample_interval": format_duration(self.sample_interval),
            "version": self.version,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "VaCSpec":
        return cls(
            tool=ProbeTool(data["tool"]),
            target=ProbeTarget.from_json(data["target"]),
            script_path=data["script_path"],
            sample_interval=parse_duration(data.get("sample_interval", "1s")),
            version=data.get("version", 0),
        )


_NAME_RE = re.compile(r"^[a-z0-9][a-z0-9-]*$")


@dataclass(frozen=True)
class SteadyState:
    """A measurable normal behavior: threshold plus its VaC probe.

    ``baseline`` is the value observed at definition time; hypothesis
    construction checks it satisfies the threshold.
    """

    name: str
    description: str
    threshold: ThresholdSpec
    vac: VaCSpec
    baseline: Optional[float] = None

    def __post_init__(self) -> None:
        if not _NAME_RE.match(self.name):
            raise DomainError(
                f"steady-state name must be lowercase alphanumerics and hyphens, got {self.name!r}"
            )

    def baseline_ok(self) -> bool:
        return self.baseline is not None and self.threshold.satisfied_by(self.baseline)

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "threshold": self.threshold.to_json(),
            "vac": self.vac.to_json(),
            "baseline": self.baseline,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "SteadyState":
        return cls(
            name=data["name"],
            description=data.get("description", ""),
            threshold=ThresholdSpec.from_json(data["threshold"]),
            vac=VaCSpec.from_json(data["vac"]),
            baseline=data.get("baseline"),
        )


class FaultKind(str, Enum):
    POD_CHAOS = "PodChaos"
    NETWORK_CHAOS = "NetworkChaos"
    DNS_CHAOS = "DNSChaos"
    HTTP_CHAOS = "HTTPChaos"
    STRESS_CHAOS = "StressChaos"
    IO_CHAOS = "IOChaos"
    TIME_CHAOS = "TimeChaos"


@dataclass(frozen=True)
class SelectorSpec:
    """Fault injection scope, mirroring the Chaos Mesh selector schema."""

    namespaces: tuple[str, ...] = ()
    label_selectors: Mapping[str, str] = field(default_factory=dict)
    field_selectors: Mapping[str, str] = field(default_factory=dict)
    pod_phase_selectors: tuple[str, ...] = ()
    pods: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "namespaces", tuple(self.namespaces))
        object.__setattr__(self, "label_selectors", dict(self.label_selectors))
        object.__setattr__(self, "field_selectors", dict(self.field_selectors))
        object.__setattr__(self, "pod_phase_selectors", tuple(self.pod_phase_selectors))
        object.__setattr__(self, "pods", {k: tuple(v) for k, v in dict(self.pods).items()})
        if not any(
            (
                self.namespaces,
                self.label_selectors,
                self.field_selectors,
                self.pod_phase_selectors,
                self.pods,
            )
        ):
            raise DomainError("selector needs at least one selection dimension")

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if self.namespaces:
            out["namespaces"] = list(self.namespaces)
        if self.label_selectors:
            out["labelSelectors"] = dict(self.label_selectors)
        if self.field_selectors:
            out["fieldSelectors"] = dict(self.field_selectors)
        if self.pod_phase_selectors:
            out["podPhaseSelectors"] = list(self.pod_phase_selectors)
        if self.pods:
            out["pods"] = {k: list(v) for k, v in self.pods.items()}
        return out

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "SelectorSpec":
        return cls(
            namespaces=data.get("namespaces", ()),
            label_selectors=data.get("labelSelectors", {}),
            field_selectors=data.get("fieldSelectors", {}),
            pod_phase_selectors=data.get("podPhaseSelectors", ()),
            pods=data.get("pods", {}),
        )


def _freeze(value: Any) -> Any:
    if isinstance(value, Mapping):
        return tuple(sorted((k, _freeze(v)) for k, v in value.items()))
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


@dataclass(frozen=True)
class Fault:
    """One Chaos Mesh failure with kind-specific parameters and a scope."""

    kind: FaultKind
    name_id: int
    params: Mapping[str, Any]
    scope: SelectorSpec

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", FaultKind(self.kind))
        if self.name_id < 0:
            raise DomainError("fault name_id must be non-negative")
        object.__setattr__(self, "params", dict(self.params))

    def __hash__(self) -> int:
        return hash((self.kind, self.name_id, _freeze(self.params), _freeze(self.scope.to_json())))

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "name_id": self.name_id,
            "params": dict(self.params),
            "scope": self.scope.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Fault":
        return cls(
            kind=FaultKind(data["kind"]),
            name_id=data["name_id"],
            params=data.get("params", {}),
            scope=SelectorSpec.from_json(data["scope"]),
        )


@dataclass(frozen=True)
class FailureScenario:
    """Ordered groups of faults; faults inside a group are injected simultaneously."""

    event: str
    description: str
    sequence: tuple[tuple[Fault, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sequence", tuple(tuple(group) for group in self.sequence))
        seen: set[tuple[FaultKind, int]] = set()
        for group in self.sequence:
            for fault in group:
                key = (fault.kind, fault.name_id)
                if key in seen:
                    raise DomainError(f"duplicate fault identity {key} in scenario")
                seen.add(key)

    def all_faults(self) -> list[Fault]:
        return [fault for group in self.sequence for fault in group]

    def to_json(self) -> dict[str, Any]:
        return {
            "event": self.event,
            "description": self.description,
            "sequence": [[fault.to_json() for fault in group] for group in self.sequence],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "FailureScenario":
        return cls(
            event=data.get("event", ""),
            description=data.get("description", ""),
            sequence=tuple(
                tuple(Fault.from_json(f) for f in group) for group in data.get("sequence", [])
            ),
        )


@dataclass(frozen=True)
class Hypothesis:
    """The proposition that every VaC passes in all three experiment stages."""

    steady_states: tuple[SteadyState, ...]
    scenario: FailureScenario

    def __post_init__(self) -> None:
        object.__setattr__(self, "steady_states", tuple(self.steady_states))
        if not self.steady_states:
            raise DomainError("hypothesis needs at least one steady state")
        names = [state.name for state in self.steady_states]
        if len(set(names)) != len(names):
            raise DomainError(f"steady-state names must be unique, got {names}")
        for state in self.steady_states:
            if not state.baseline_ok():
                raise DomainError(
                    f"steady state {state.name!r} baseline {state.baseline!r} does not satisfy "
                    "its own threshold"
                )

    def steady_state(self, name: str) -> SteadyState:
        for state in self.steady_states:
            if state.name == name:
                return state
        raise KeyError(name)

    def to_json(self) -> dict[str, Any]:
        return {
            "steady_states": [state.to_json() for state in self.steady_states],
            "scenario": self.scenario.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Hypothesis":
        return cls(
            steady_states=tuple(SteadyState.from_json(s) for s in data["steady_states"]),
            scenario=FailureScenario.from_json(data["scenario"]),
        )


@dataclass(frozen=True)
class VaCOutcome:
    """Result of one VaC run: the aggregate measured and whether it passed."""

    name: str
    passed: bool
    log: str
    measured: float


@dataclass(frozen=True)
class ExperimentResult:
    """Outcomes of all scheduled VaC runs in one experiment."""

    scheduled: tuple[str, ...]
    outcomes: Mapping[str, VaCOutcome]

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheduled", tuple(self.scheduled))
        object.__setattr__(self, "outcomes", dict(self.outcomes))

    def failed(self) -> list[VaCOutcome]:
        return [self.outcomes[name] for name in self.scheduled if not self.outcomes[name].passed]

    def passed(self) -> list[VaCOutcome]:
        return [self.outcomes[name] for name in self.scheduled if self.outcomes[name].passed]


def hypothesis_satisfied(result: ExperimentResult) -> bool:
    """True iff every scheduled VaC run passed. Pure; vacuously true when empty."""
    missing = [name for name in result.scheduled if name not in result.outcomes]
    if missing:
        raise DomainError(f"result missing outcomes for scheduled runs: {missing}")
    return all(result.outcomes[name].passed for name in result.scheduled)


class CyclePhase(str, Enum):
    PRE_PROCESSING = "pre-processing"
    HYPOTHESIS = "hypothesis"
    EXPERIMENT = "experiment"
    ANALYSIS = "analysis"
    IMPROVEMENT = "improvement"
    POST_PROCESSING = "post-processing"


@dataclass
class ImprovementRecord:
    result: ExperimentResult
    report: str
    actions: Sequence[Any]


@dataclass
class CycleState:
    """Progress of one CE cycle: workspace version, history, phase."""

    workspace_version: int = 0
    improvement_history: list[ImprovementRecord] = field(default_factory=list)
    phase: CyclePhase = CyclePhase.PRE_PROCESSING
    retries_used: int = 0

    def record_improvement(self, record: ImprovementRecord, max_retries: int) -> None:
        if len(self.improvement_history) >= max_retries:
            raise DomainError(f"improvement history exceeds max_retries={max_retries}")
        self.improvement_history.append(record)
        self.workspace_version = len(self.improvement_history)
