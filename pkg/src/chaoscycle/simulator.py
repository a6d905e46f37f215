"""Discrete-event execution of compiled workflows against a modeled cluster.

The default execution backend: 1-second ticks, deterministic under a fixed
seed, producing a timeline, per-probe traces, and VaC outcomes.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

from .compiler import (
    ExperimentPlan,
    NodeType,
    STAGE_ORDER,
    WorkflowNode,
    _UNITTEST_PREFIX,
)
from .domain import (
    Duration,
    Fault,
    FaultKind,
    Metric,
    ProbeTool,
    SelectorSpec,
    ThresholdSpec,
    VaCOutcome,
    VaCSpec,
)
from .manifests import SystemSnapshot
from .vac import SampleTrace, evaluate_threshold, trace_from_values

DEFAULT_RESTART_DELAY = 3
# A deployment whose last replica dies restarts from cold; modeled as slower
# than any desk-scale experiment window.
DEFAULT_COLD_START_DELAY = 300


@dataclass
class PodState:
    name: str
    namespace: str
    labels: dict[str, str]
    restart_policy: str = "Always"
    running: bool = True
    owner: Optional[tuple[str, str]] = None  # (namespace, deployment name)
    stressed: bool = False
    delayed: bool = False


@dataclass
class DeploymentState:
    name: str
    namespace: str
    desired_replicas: int
    template_labels: dict[str, str]
    ready_replicas: int = 0


@dataclass
class ServiceState:
    name: str
    namespace: str
    selector: dict[str, str]
    port: int = 80


@dataclass
class ClusterModel:
    """Mutable cluster state driven by the tick loop."""

    pods: dict[tuple[str, str], PodState] = field(default_factory=dict)
    deployments: dict[tuple[str, str], DeploymentState] = field(default_factory=dict)
    services: dict[tuple[str, str], ServiceState] = field(default_factory=dict)
    inert: list[tuple[str, str, str]] = field(default_factory=list)  # (ns, kind, name)
    warnings: list[str] = field(default_factory=list)
    clock: int = 0
    restart_delay: int = DEFAULT_RESTART_DELAY
    cold_start_delay: int = DEFAULT_COLD_START_DELAY
    _respawns: list[tuple[int, tuple[str, str]]] = field(default_factory=list)  # (due, pod key)
    _pod_counter: int = 0

    def pods_matching(self, selector: SelectorSpec) -> list[PodState]:
        out = []
        for pod in self.pods.values():
            if selector.namespaces and pod.namespace not in selector.namespaces:
                continue
            if selector.label_selectors and not all(
                pod.labels.get(k) == v for k, v in selector.label_selectors.items()
            ):
                continue
            if selector.pods:
                allowed = selector.pods.get(pod.namespace, ())
                if pod.name not in allowed:
                    continue
            out.append(pod)
        return sorted(out, key=lambda p: (p.namespace, p.name))

    def running_pods_with_labels(self, namespace: str, labels: Mapping[str, str]) -> list[PodState]:
        return [
            pod
            for pod in self.pods.values()
            if pod.namespace == namespace
            and pod.running
            and all(pod.labels.get(k) == v for k, v in labels.items())
        ]

    def total_pods(self) -> int:
        return len(self.pods)

    def kill_pod(self, pod: PodState, now: int) -> None:
        if not pod.running:
            return
        pod.running = False
        if pod.owner is not None:
            deployment = self.deployments[pod.owner]
            deployment.ready_replicas = max(0, deployment.ready_replicas - 1)
            delay = self.restart_delay if deployment.ready_replicas >= 1 else self.cold_start_delay
            self._respawns.append((now + delay, (pod.namespace, pod.name)))
        elif pod.restart_policy != "Never":
            self._respawns.append((now + self.restart_delay, (pod.namespace, pod.name)))

    def tick(self, now: int) -> None:
        self.clock = now
        due = [item for item in self._respawns if item[0] <= now]
        self._respawns = [item for item in self._respawns if item[0] > now]
        for _, key in due:
            pod = self.pods.get(key)
            if pod is None:
                continue
            pod.running = True
            if pod.owner is not None:
                deployment = self.deployments[pod.owner]
                deployment.ready_replicas = min(deployment.desired_replicas, deployment.ready_replicas + 1)


def build_cluster(
    snapshot: SystemSnapshot,
    restart_delay: int = DEFAULT_RESTART_DELAY,
    cold_start_delay: int = DEFAULT_COLD_START_DELAY,
) -> ClusterModel:
    """One resource per manifest; deployments start fully ready, pods running."""
    cluster = ClusterModel(restart_delay=restart_delay, cold_start_delay=cold_start_delay)
    for key, doc in snapshot.manifests.items():
        if doc.kind == "Pod":
            spec = doc.body.get("spec") or {}
            cluster.pods[(doc.namespace, doc.name)] = PodState(
                name=doc.name,
                namespace=doc.namespace,
                labels=dict(doc.labels),
                restart_policy=spec.get("restartPolicy", "Always"),
            )
        elif doc.kind == "Deployment":
            spec = doc.body.get("spec") or {}
            desired = int(spec.get("replicas", 1))
            template = spec.get("template") or {}
            template_labels = dict(((template.get("metadata") or {}).get("labels")) or {})
            deployment = DeploymentState(
                name=doc.name,
                namespace=doc.namespace,
                desired_replicas=desired,
                template_labels=template_labels,
                ready_replicas=desired,
            )
            cluster.deployments[(doc.namespace, doc.name)] = deployment
            for i in range(desired):
                pod_name = f"{doc.name}-{i}"
                cluster.pods[(doc.namespace, pod_name)] = PodState(
                    name=pod_name,
                    namespace=doc.namespace,
                    labels=dict(template_labels),
                    owner=(doc.namespace, doc.name),
                )
        elif doc.kind == "Service":
            spec = doc.body.get("spec") or {}
            ports = spec.get("ports") or [{}]
            cluster.services[(doc.namespace, doc.name)] = ServiceState(
                name=doc.name,
                namespace=doc.namespace,
                selector=dict(spec.get("selector") or {}),
                port=int((ports[0] or {}).get("port", 80)),
            )
        else:
            cluster.inert.append((doc.namespace, doc.kind, doc.name))
            cluster.warnings.append(f"{key}: unsupported kind {doc.kind}, recorded as inert")
    return cluster


@dataclass(frozen=True)
class TimelineEvent:
    t: int
    node_name: str
    event: str  # "start" | "end"


@dataclass
class Timeline:
    events: list[TimelineEvent] = field(default_factory=list)
    traces: dict[str, SampleTrace] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def window(self, node_name: str) -> Optional[tuple[int, int]]:
        start = next((e.t for e in self.events if e.node_name == node_name and e.event == "start"), None)
        end = next((e.t for e in self.events if e.node_name == node_name and e.event == "end"), None)
        if start is None or end is None:
            return None
        return start, end

    def to_json(self) -> dict[str, Any]:
        return {
            "events": [{"t": e.t, "node": e.node_name, "event": e.event} for e in self.events],
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class _LeafWindow:
    node: WorkflowNode
    start: int
    end: int


def _semantic_length(node: WorkflowNode) -> int:
    if node.node_type in (NodeType.TASK, NodeType.SUSPEND, NodeType.FAILURE):
        if node.run_duration is None:
            raise ValueError(f"leaf {node.node_name} has no run duration")
        return node.run_duration.seconds
    if node.node_type is NodeType.SERIAL:
        return sum(_semantic_length(child) for child in node.children)
    return max(_semantic_length(child) for child in node.children)


def _collect_windows(node: WorkflowNode, start: int, out: list[_LeafWindow]) -> int:
    """Place leaves on the clock; returns the subtree's semantic end."""
    if node.node_type in (NodeType.TASK, NodeType.SUSPEND, NodeType.FAILURE):
        end = start + _semantic_length(node)
        out.append(_LeafWindow(node, start, end))
        return end
    if node.node_type is NodeType.SERIAL:
        cursor = start
        for child in node.children:
            cursor = _collect_windows(child, cursor, out)
        return cursor
    return max(_collect_windows(child, start, out) for child in node.children)


def _resolve_mode_count(fault: Fault, matched: int, rng: random.Random) -> int:
    mode = fault.params.get("mode", "all")
    if matched == 0:
        return 0
    if mode == "one":
        return 1
    if mode == "all":
        return matched
    value = fault.params.get("value", "1")
    if mode == "fixed":
        return min(matched, max(1, int(value)))
    if mode == "fixed-percent":
        return min(matched, max(1, int(matched * int(value) / 100)))
    if mode == "random-max-percent":
        percent = rng.randint(0, int(value))
        return min(matched, max(1, int(matched * percent / 100)))
    return matched


_URL_RE = re.compile(r"^http://([a-z0-9-]+)\.([a-z0-9-]+)\.svc\.cluster\.local:(\d+)")


def _sample_metric(cluster: ClusterModel, vac: VaCSpec, metric: Metric) -> float:
    target = vac.target
    if vac.tool is ProbeTool.LOAD_TEST:
        match = _URL_RE.match(target.url)
        if not match:
            return 1.0  # unresolvable URL: every request fails
        service = cluster.services.get((match.group(2), match.group(1)))
        if service is None:
            return 1.0
        backends = cluster.running_pods_with_labels(service.namespace, service.selector)
        return 0.0 if backends else 1.0
    if metric is Metric.READY_REPLICAS_MIN or metric is Metric.READY_RATIO:
        deployment = cluster.deployments.get((target.namespace, target.name))
        if deployment is None:
            return 0.0
        if metric is Metric.READY_REPLICAS_MIN:
            return float(deployment.ready_replicas)
        if deployment.desired_replicas == 0:
            return 0.0
        return deployment.ready_replicas / deployment.desired_replicas
    # running-ratio over a named pod or a label selection
    if target.name:
        pod = cluster.pods.get((target.namespace, target.name))
        if pod is not None:
            return 1.0 if pod.running else 0.0
        if (target.namespace, target.name) in cluster.deployments:
            deployment = cluster.deployments[(target.namespace, target.name)]
            return 1.0 if deployment.ready_replicas >= 1 else 0.0
        return 0.0
    running = cluster.running_pods_with_labels(target.namespace, target.label_selectors)
    return 1.0 if running else 0.0


def _apply_fault_start(cluster: ClusterModel, fault: Fault, now: int, rng: random.Random, warnings: list[str]) -> list[PodState]:
    matched = [p for p in cluster.pods_matching(fault.scope) if p.running]
    if not matched:
        warnings.append(f"{fault.kind.value}: selector matched no pods at t={now}, injection is a no-op")
        return []
    count = _resolve_mode_count(fault, len(matched), rng)
    selected = matched if count >= len(matched) else rng.sample(matched, count)
    if fault.kind is FaultKind.POD_CHAOS:
        for pod in selected:
            cluster.kill_pod(pod, now)
    elif fault.kind is FaultKind.STRESS_CHAOS:
        for pod in selected:
            pod.stressed = True
    elif fault.kind is FaultKind.NETWORK_CHAOS:
        for pod in selected:
            pod.delayed = True
    else:
        warnings.append(f"{fault.kind.value}: no modeled availability effect")
    return selected


def _clear_fault_effect(fault: Fault, selected: list[PodState]) -> None:
    if fault.kind is FaultKind.STRESS_CHAOS:
        for pod in selected:
            pod.stressed = False
    elif fault.kind is FaultKind.NETWORK_CHAOS:
        for pod in selected:
            pod.delayed = False


def steady_state_name_of(node_name: str) -> Optional[str]:
    for prefix in _UNITTEST_PREFIX.values():
        if node_name.startswith(prefix):
            return node_name[len(prefix):]
    return None


def simulate(
    tree: WorkflowNode,
    cluster: ClusterModel,
    thresholds: Mapping[str, ThresholdSpec],
    seed: int = 0,
    stage_times: Optional[Iterable[Duration]] = None,
) -> tuple[Timeline, list[VaCOutcome]]:
    """Run the compiled workflow against the cluster model.

    Stage subtrees start at the cumulative planned stage times when given
    (or recorded on the tree); otherwise each stage starts when the previous
    one finishes. Deterministic for a fixed seed.
    """
    rng = random.Random(seed)
    timeline = Timeline()

    times = [d.seconds for d in stage_times] if stage_times is not None else None
    if times is None and all(child.stage_time is not None for child in tree.children) and tree.children:
        times = [child.stage_time.seconds for child in tree.children]

    windows: list[_LeafWindow] = []
    if times is not None and len(times) == len(tree.children):
        offset = 0
        for child, length in zip(tree.children, times):
            _collect_windows(child, offset, windows)
            offset += length
        horizon = offset
    else:
        horizon = _collect_windows(tree, 0, windows)

    for window in sorted(windows, key=lambda w: (w.start, w.node.node_name)):
        timeline.events.append(TimelineEvent(window.start, window.node.node_name, "start"))
        timeline.events.append(TimelineEvent(window.end, window.node.node_name, "end"))
    timeline.events.sort(key=lambda e: (e.t, e.node_name, e.event))

    fault_windows = [w for w in windows if w.node.node_type is NodeType.FAILURE]
    task_windows = [w for w in windows if w.node.node_type is NodeType.TASK]
    for w in task_windows:
        if w.node.vac is None:
            raise ValueError(f"task {w.node.node_name} has no VaC spec to sample")
        name = steady_state_name_of(w.node.node_name)
        if name is None or name not in thresholds:
            raise ValueError(f"task {w.node.node_name}: no threshold for its steady state")

    active_faults: dict[str, list[PodState]] = {}
    samples: dict[str, list[float]] = {w.node.node_name: [] for w in task_windows}

    for now in range(horizon):
        cluster.tick(now)
        for w in fault_windows:
            if w.start == now and w.node.fault is not None:
                active_faults[w.node.node_name] = _apply_fault_start(
                    cluster, w.node.fault, now, rng, timeline.warnings
                )
        for w in fault_windows:
            if w.end == now and w.node.fault is not None and w.node.node_name in active_faults:
                _clear_fault_effect(w.node.fault, active_faults.pop(w.node.node_name))
        for w in task_windows:
            if w.start <= now < w.end:
                name = steady_state_name_of(w.node.node_name)
                metric = thresholds[name].metric
                samples[w.node.node_name].append(_sample_metric(cluster, w.node.vac, metric))
    cluster.tick(horizon)
    for node_name, selected in list(active_faults.items()):
        window = next(w for w in fault_windows if w.node.node_name == node_name)
        _clear_fault_effect(window.node.fault, selected)

    outcomes: list[VaCOutcome] = []
    for w in sorted(task_windows, key=lambda w: (w.start, w.node.node_name)):
        state_name = steady_state_name_of(w.node.node_name)
        trace = trace_from_values(w.node.node_name, samples[w.node.node_name], start=w.start)
        timeline.traces[w.node.node_name] = trace
        outcome = evaluate_threshold(thresholds[state_name], trace)
        outcomes.append(outcome)
    return timeline, outcomes


@dataclass(frozen=True)
class TimelineViolation:
    node_name: str
    message: str

    def __str__(self) -> str:
        return f"{self.node_name}: {self.message}"


def timeline_check(timeline: Timeline, plan: ExperimentPlan) -> list[TimelineViolation]:
    """Oracle for the grace encoding: every leaf must start at stage offset +
    grace and run for exactly its duration."""
    violations: list[TimelineViolation] = []
    for stage in STAGE_ORDER:
        offset = plan.stage_offset(stage).seconds
        items = list(plan.stages[stage])
        fault_names = _plan_fault_names(items)
        for index, item in enumerate(items):
            if item.is_fault:
                node_name = fault_names[index]
            else:
                node_name = _UNITTEST_PREFIX[stage] + item.name
            window = timeline.window(node_name)
            if window is None:
                violations.append(TimelineViolation(node_name, "missing from timeline"))
                continue
            expected_start = offset + item.grace_period.seconds
            expected_end = expected_start + item.duration.seconds
            if window != (expected_start, expected_end):
                violations.append(
                    TimelineViolation(
                        node_name,
                        f"expected [{expected_start}, {expected_end}), got [{window[0]}, {window[1]})",
                    )
                )
    return violations


def _plan_fault_names(items) -> dict[int, str]:
    from .compiler import _fault_leaf_names

    return _fault_leaf_names(list(items))
