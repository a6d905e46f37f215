"""Deterministic rule-based planner.

Same snapshot and instructions always yield the same hypothesis, plan,
analysis, and reconfiguration, which keeps orchestrator runs reproducible
without a model endpoint. Token accounting uses a whitespace approximation
and is flagged as such in the ledger.
"""

from __future__ import annotations

import re
from typing import Mapping, Optional, Sequence

import yaml

from ..domain import (
    Comparator,
    DomainError,
    Duration,
    Fault,
    FaultKind,
    Hypothesis,
    Metric,
    ProbeTarget,
    ProbeTool,
    SelectorSpec,
    SteadyState,
    ThresholdSpec,
    VaCSpec,
)
from ..manifests import ChangeSummary, ManifestDoc, ReconfigAction, ReconfigMode, SystemSnapshot
from .ledger import CostLedger, approx_token_count
from .loop import Attempt
from .planner import (
    CycleContext,
    FaultSketch,
    Planner,
    ScenarioDraft,
    ScheduleEntry,
    StageTimes,
    SteadyStateDraft,
    Weakness,
)

_MINUTES_RE = re.compile(r"within\s+(\d+)\s*minute", re.IGNORECASE)
_SECONDS_RE = re.compile(r"within\s+(\d+)\s*second", re.IGNORECASE)

DEFAULT_TOTAL_TIME = Duration(60)


def _workload_docs(snapshot: SystemSnapshot) -> list[tuple[str, ManifestDoc]]:
    return [(path, doc) for path, doc in snapshot.manifests.items() if doc.kind in ("Pod", "Deployment")]


def _service_docs(snapshot: SystemSnapshot) -> list[tuple[str, ManifestDoc]]:
    return [(path, doc) for path, doc in snapshot.manifests.items() if doc.kind == "Service"]


def _spec(doc: ManifestDoc) -> Mapping:
    return doc.body.get("spec") or {}


def _deployment_replicas(doc: ManifestDoc) -> int:
    return int(_spec(doc).get("replicas", 1))


def _deployment_has_resources(doc: ManifestDoc) -> bool:
    template = _spec(doc).get("template") or {}
    containers = ((template.get("spec") or {}).get("containers")) or []
    return any(c.get("resources") for c in containers)


def _pod_labels(doc: ManifestDoc) -> dict[str, str]:
    if doc.kind == "Pod":
        return dict(doc.labels)
    template = (_spec(doc).get("template") or {}).get("metadata") or {}
    return dict(template.get("labels") or {})


class StubPlanner(Planner):
    """Rule-based planning over flagged weaknesses.

    Rules: bare pods and single-replica deployments get availability steady
    states and a pod-kill; deployments without resource requests get CPU
    stress; a service selecting the killed workload adds a delay fault and an
    availability probe.
    """

    def __init__(self, ledger: Optional[CostLedger] = None, script_dir: str = "hypothesis"):
        self.ledger = ledger if ledger is not None else CostLedger(approximate_counts=True)
        self.ledger.approximate_counts = True
        self.script_dir = script_dir
        self._state_targets: dict[str, str] = {}  # steady-state name -> manifest path

    # -- accounting -------------------------------------------------------

    def _charge(self, phase: str, prompt: str, output: str) -> None:
        self.ledger.record(phase, approx_token_count(prompt), approx_token_count(output))

    # -- phase 0 ----------------------------------------------------------

    def fill_context(self, snapshot: SystemSnapshot, instructions: str) -> CycleContext:
        summaries: dict[str, str] = {}
        weaknesses: list[Weakness] = []
        for path, doc in snapshot.manifests.items():
            summaries[path] = f"- defines a {doc.kind} named {doc.name} in namespace {doc.namespace}"
            if doc.kind == "Pod":
                restart = _spec(doc).get("restartPolicy", "Always")
                if restart == "Never":
                    weaknesses.append(
                        Weakness(
                            name="pod-restart-policy",
                            details=f"Pod {doc.name} never restarts after a failure",
                            manifests=(path,),
                            problematic_config="restartPolicy: Never",
                            tag="restart-policy",
                        )
                    )
                weaknesses.append(
                    Weakness(
                        name="bare-pod",
                        details=f"Pod {doc.name} has no controller, so there is no redundancy",
                        manifests=(path,),
                        problematic_config="kind: Pod",
                        tag="bare-pod",
                    )
                )
            elif doc.kind == "Deployment":
                if _deployment_replicas(doc) == 1:
                    weaknesses.append(
                        Weakness(
                            name="single-replica",
                            details=f"Deployment {doc.name} runs a single replica",
                            manifests=(path,),
                            problematic_config="replicas: 1",
                            tag="single-replica",
                        )
                    )
                if not _deployment_has_resources(doc):
                    weaknesses.append(
                        Weakness(
                            name="no-resource-limits",
                            details=f"Deployment {doc.name} sets no resource requests or limits",
                            manifests=(path,),
                            problematic_config="resources: (absent)",
                            tag="no-resource-limits",
                        )
                    )
        kinds = sorted({doc.kind for doc in snapshot.manifests.values()})
        application = f"service composed of {', '.join(kinds)} resources"
        filtered = "\n".join(f"- {line.strip()}" for line in instructions.splitlines() if line.strip())
        context = CycleContext(
            snapshot=snapshot,
            instructions=filtered,
            summaries=summaries,
            weaknesses=weaknesses,
            application=application,
        )
        self._charge("pre-processing", yaml.safe_dump(summaries) + instructions, str(weaknesses))
        return context

    # -- phase 1: steady states -------------------------------------------

    def _candidate_states(self, context: CycleContext) -> list[tuple[str, str, ManifestDoc]]:
        """(steady-state name, flavor, doc) in priority order, weak targets first."""
        snapshot = context.snapshot
        ordered: list[tuple[int, str, str, str, ManifestDoc]] = []
        weak_paths = {path for w in context.weaknesses for path in w.manifests}
        for path, doc in _workload_docs(snapshot):
            if doc.kind == "Pod":
                name = f"{doc.name}-running"
                flavor = "pod-running"
            else:
                replicas = _deployment_replicas(doc)
                name = f"{doc.name}-replica" if replicas == 1 else f"{doc.name}-replicas"
                flavor = "deployment-ready"
            priority = 0 if path in weak_paths else 1
            ordered.append((priority, path, name, flavor, doc))
        for path, doc in _service_docs(snapshot):
            ordered.append((2, path, f"{doc.name}-availability", "service-availability", doc))
        ordered.sort(key=lambda row: (row[0], row[1]))
        result = [(name, flavor, doc) for _, _, name, flavor, doc in ordered]
        if not any(p == 0 for p, *_ in ordered):
            # Healthy system: a single generic availability steady state.
            return result[:1]
        return result

    def draft_steady_state(
        self,
        context: CycleContext,
        defined: Sequence[SteadyState],
        transcript: Sequence[Attempt],
    ) -> SteadyStateDraft:
        defined_names = {s.name for s in defined}
        for name, flavor, doc in self._candidate_states(context):
            if name in defined_names:
                continue
            draft = self._draft_for(name, flavor, doc)
            self._charge("hypothesis", context.application + name, draft.description)
            return draft
        raise DomainError("no further steady-state candidates in this system")

    def _draft_for(self, name: str, flavor: str, doc: ManifestDoc) -> SteadyStateDraft:
        version = 0
        if flavor == "pod-running":
            threshold = ThresholdSpec(
                metric=Metric.RUNNING_RATIO,
                comparator=Comparator.GE,
                value=0.9,
                description=f"pod {doc.name} running at least 90% of samples",
            )
            vac = VaCSpec(
                tool=ProbeTool.CLUSTER_API,
                target=ProbeTarget(namespace=doc.namespace, kind="Pod", name=doc.name),
                script_path=f"{self.script_dir}/unittest_{name}_mod{version}.py",
            )
            description = f"the pod {doc.name} stays running"
        elif flavor == "deployment-ready":
            threshold = ThresholdSpec(
                metric=Metric.READY_REPLICAS_MIN,
                comparator=Comparator.GE,
                value=1,
                description=f"deployment {doc.name} keeps at least 1 ready replica at every sample",
            )
            vac = VaCSpec(
                tool=ProbeTool.CLUSTER_API,
                target=ProbeTarget(namespace=doc.namespace, kind="Deployment", name=doc.name),
                script_path=f"{self.script_dir}/unittest_{name}_mod{version}.py",
            )
            description = f"the deployment {doc.name} keeps at least one ready replica"
        elif flavor == "service-availability":
            port = int(((_spec(doc).get("ports") or [{}])[0] or {}).get("port", 80))
            url = f"http://{doc.name}.{doc.namespace}.svc.cluster.local:{port}"
            threshold = ThresholdSpec(
                metric=Metric.REQUEST_FAILURE_RATE,
                comparator=Comparator.LE,
                value=0.001,
                description=f"request failure rate of {doc.name} stays at or below 0.1%",
            )
            vac = VaCSpec(
                tool=ProbeTool.LOAD_TEST,
                target=ProbeTarget(namespace=doc.namespace, kind="Service", name=doc.name, url=url),
                script_path=f"{self.script_dir}/unittest_{name}_mod{version}.js",
            )
            description = f"the service {doc.name} answers requests"
        else:
            raise ValueError(f"unknown steady-state flavor {flavor}")
        return SteadyStateDraft(name=name, description=description, threshold=threshold, vac=vac)

    def needs_more_steady_states(self, context: CycleContext, defined: Sequence[SteadyState]) -> bool:
        defined_names = {s.name for s in defined}
        remaining = [name for name, _, _ in self._candidate_states(context) if name not in defined_names]
        self._charge("hypothesis", str(defined_names), str(remaining))
        return bool(remaining)

    # -- phase 1: failure scenario ------------------------------------------

    def draft_scenario(self, context: CycleContext, states: Sequence[SteadyState]) -> ScenarioDraft:
        snapshot = context.snapshot
        groups: list[tuple[FaultSketch, ...]] = []
        name_id = 0

        stress_doc = None
        for weakness in context.weaknesses:
            if weakness.tag == "no-resource-limits":
                stress_doc = snapshot.manifests[weakness.manifests[0]]
                break
        if stress_doc is not None:
            groups.append(
                (
                    FaultSketch(
                        kind=FaultKind.STRESS_CHAOS,
                        name_id=name_id,
                        scope_hint={"namespace": stress_doc.namespace, "manifest": stress_doc.name},
                    ),
                )
            )
            name_id += 1

        kill_doc = None
        for weakness in context.weaknesses:
            if weakness.tag in ("bare-pod", "restart-policy", "single-replica"):
                kill_doc = snapshot.manifests[weakness.manifests[0]]
                break
        if kill_doc is None and _workload_docs(snapshot):
            kill_doc = _workload_docs(snapshot)[0][1]
        if kill_doc is not None:
            groups.append(
                (
                    FaultSketch(
                        kind=FaultKind.POD_CHAOS,
                        name_id=name_id,
                        scope_hint={"namespace": kill_doc.namespace, "manifest": kill_doc.name},
                    ),
                )
            )
            name_id += 1

        if stress_doc is None and kill_doc is not None:
            # A service routing to the killed workload gets latency stress.
            labels = _pod_labels(kill_doc)
            for _, service in _service_docs(snapshot):
                selector = dict(_spec(service).get("selector") or {})
                if selector and all(labels.get(k) == v for k, v in selector.items()):
                    groups.append(
                        (
                            FaultSketch(
                                kind=FaultKind.NETWORK_CHAOS,
                                name_id=name_id,
                                scope_hint={"namespace": kill_doc.namespace, "manifest": kill_doc.name},
                            ),
                        )
                    )
                    name_id += 1
                    break

        event = "traffic surge" if stress_doc is not None else "cyber attack"
        description = f"simulated {event} against the flagged weak resources"
        self._charge("hypothesis", str([w.name for w in context.weaknesses]), description)
        return ScenarioDraft(event=event, description=description, groups=tuple(groups))

    def detail_fault(
        self,
        context: CycleContext,
        states: Sequence[SteadyState],
        sketch: FaultSketch,
        transcript: Sequence[Attempt],
    ) -> Fault:
        doc = next(
            d for d in context.snapshot.manifests.values() if d.name == sketch.scope_hint.get("manifest")
        )
        labels = _pod_labels(doc)
        scope = SelectorSpec(namespaces=(doc.namespace,), label_selectors=labels)
        if sketch.kind is FaultKind.POD_CHAOS:
            params = {"action": "pod-kill", "mode": "one"}
        elif sketch.kind is FaultKind.STRESS_CHAOS:
            container = ((_spec(doc).get("template") or {}).get("spec") or {}).get("containers") or [{}]
            params = {
                "mode": "all",
                "stressors": {"cpu": {"workers": 2, "load": 80}},
                "containerNames": [container[0].get("name", doc.name)],
            }
        elif sketch.kind is FaultKind.NETWORK_CHAOS:
            params = {
                "action": "delay",
                "mode": "all",
                "direction": "to",
                "device": "eth0",
                "delay": {"latency": "100ms", "jitter": "10ms", "correlation": "50"},
                "target": {"mode": "all", "selector": scope.to_json()},
            }
        else:
            params = {"mode": "all"}
        fault = Fault(kind=sketch.kind, name_id=sketch.name_id, params=params, scope=scope)
        self._charge("hypothesis", str(sketch), str(params))
        return fault

    # -- phase 2: planning ---------------------------------------------------

    def _total_time(self, context: CycleContext) -> Duration:
        match = _MINUTES_RE.search(context.instructions)
        if match:
            return Duration(int(match.group(1)) * 60)
        match = _SECONDS_RE.search(context.instructions)
        if match:
            return Duration(int(match.group(1)))
        return DEFAULT_TOTAL_TIME

    def plan_stage_times(self, context: CycleContext, hypothesis: Hypothesis) -> StageTimes:
        total = self._total_time(context)
        pre = Duration(total.seconds // 3)
        fault = Duration(total.seconds // 3)
        post = Duration(total.seconds - pre.seconds - fault.seconds)
        self._charge("experiment", context.instructions, str((total, pre, fault, post)))
        return StageTimes(total=total, pre=pre, fault=fault, post=post)

    def plan_stage_schedule(
        self,
        context: CycleContext,
        hypothesis: Hypothesis,
        stage: str,
        stage_time: Duration,
        transcript: Sequence[Attempt],
    ) -> list[ScheduleEntry]:
        entries: list[ScheduleEntry] = []
        if stage in ("pre-valid", "post-valid"):
            for state in hypothesis.steady_states:
                entries.append(
                    ScheduleEntry(name=state.name, grace_period=Duration(0), duration=stage_time)
                )
        else:
            groups = hypothesis.scenario.sequence
            slot = Duration(stage_time.seconds // max(1, len(groups)))
            used: set[str] = set()
            for index, group in enumerate(groups):
                grace = Duration(slot.seconds * index)
                for fault in group:
                    entries.append(
                        ScheduleEntry(
                            name=fault.kind.value,
                            grace_period=grace,
                            duration=slot,
                            is_fault=True,
                            fault_ref=(fault.kind, fault.name_id),
                        )
                    )
                state = self._state_for_fault(context, hypothesis, group[0], used)
                if state is not None:
                    used.add(state.name)
                    entries.append(
                        ScheduleEntry(name=state.name, grace_period=grace, duration=slot)
                    )
        self._charge("experiment", stage, str(len(entries)))
        return entries

    def _state_for_fault(
        self, context: CycleContext, hypothesis: Hypothesis, fault: Fault, used: set[str]
    ) -> Optional[SteadyState]:
        """The steady state probing what this fault disturbs.

        Network-level faults validate alongside request probes; workload-level
        faults validate alongside resource probes. A state pairs with at most
        one fault group.
        """
        scope_labels = dict(fault.scope.label_selectors)
        network_kinds = (FaultKind.NETWORK_CHAOS, FaultKind.HTTP_CHAOS, FaultKind.DNS_CHAOS)
        states = sorted(
            hypothesis.steady_states,
            key=lambda s: bool(s.vac.target.url) != (fault.kind in network_kinds),
        )
        for state in states:
            if state.name in used:
                continue
            target = state.vac.target
            if target.url:
                # Service probe: match when the service routes to the scoped pods.
                for _, service in _service_docs(context.snapshot):
                    selector = dict(_spec(service).get("selector") or {})
                    if (
                        f"http://{service.name}." in target.url
                        and selector
                        and all(scope_labels.get(k) == v for k, v in selector.items())
                    ):
                        return state
                continue
            doc = next(
                (d for d in context.snapshot.manifests.values() if d.name == target.name and d.kind == target.kind),
                None,
            )
            if doc is not None and _pod_labels(doc) == scope_labels:
                return state
        return None

    def summarize_plan(self, context: CycleContext, plan_json: Mapping) -> str:
        lines = [
            "three-stage chaos experiment",
            f"total {plan_json['total_time']}: pre {plan_json['pre_time']}, "
            f"fault {plan_json['fault_time']}, post {plan_json['post_time']}",
        ]
        for stage_name, items in plan_json["stages"].items():
            for item in items:
                lines.append(
                    f"{stage_name}: {item['name']} grace {item['grace_period']} duration {item['duration']}"
                )
        summary = "\n".join(lines)
        self._charge("experiment", str(plan_json), summary)
        return summary

    # -- phase 3: analysis -----------------------------------------------------

    def analyze(
        self,
        context: CycleContext,
        hypothesis: Hypothesis,
        plan_summary: str,
        failed: Sequence[tuple[str, str]],
    ) -> str:
        lines = ["failed validations and their likely causes:"]
        for name, log in failed:
            cause = "unknown cause"
            for weakness in context.weaknesses:
                if weakness.tag in ("restart-policy", "bare-pod"):
                    cause = "the workload cannot recover because nothing restarts or replaces it"
                    break
                if weakness.tag == "single-replica":
                    cause = "a single replica leaves no capacity when its pod is killed"
                    break
            lines.append(f"- {name}: {cause}")
            lines.append(f"  log tail: {log.splitlines()[-1] if log else '(empty)'}")
        lines.append("recommendation: add a managed controller or more replicas to the weak workload")
        report = "\n".join(lines)
        self._charge("analysis", plan_summary + str(failed), report)
        return report

    # -- phase 4: improvement ----------------------------------------------------

    def reconfigure(
        self,
        context: CycleContext,
        hypothesis: Hypothesis,
        report: str,
        history: Sequence[Sequence[ReconfigAction]],
        transcript: Sequence[Attempt],
    ) -> list[ReconfigAction]:
        snapshot = context.snapshot
        past = [tuple((a.mode.value, a.fname, a.code) for a in batch) for batch in history]

        for path, doc in _workload_docs(snapshot):
            if doc.kind == "Pod":
                base = doc.name[:-4] if doc.name.endswith("-pod") else doc.name
                replicas = 3
                while True:
                    code = self._deployment_manifest(doc, f"{base}-deployment", replicas)
                    actions = [
                        ReconfigAction(
                            mode=ReconfigMode.REPLACE,
                            fname=path,
                            explanation=(
                                f"replace the bare pod {doc.name} with a deployment of {replicas} "
                                "replicas so killed pods are replaced"
                            ),
                            code=code,
                        )
                    ]
                    if tuple((a.mode.value, a.fname, a.code) for a in actions) not in past:
                        self._charge("improvement", report, code)
                        return actions
                    replicas += 1
        deployments = [(path, doc) for path, doc in _workload_docs(snapshot) if doc.kind == "Deployment"]
        named_in_report = [(p, d) for p, d in deployments if d.name in report]
        single_replica = [(p, d) for p, d in deployments if _deployment_replicas(d) == 1]
        for path, doc in named_in_report or single_replica:
            current = _deployment_replicas(doc)
            replicas = current + 1
            while True:
                body = yaml.safe_load(snapshot.read_file(path))
                body["spec"]["replicas"] = replicas
                code = yaml.safe_dump(body, sort_keys=False)
                actions = [
                    ReconfigAction(
                        mode=ReconfigMode.REPLACE,
                        fname=path,
                        explanation=f"raise {doc.name} replicas from {current} to {replicas}",
                        code=code,
                    )
                ]
                if tuple((a.mode.value, a.fname, a.code) for a in actions) not in past:
                    self._charge("improvement", report, code)
                    return actions
                replicas += 1
        raise DomainError("no reconfiguration rule applies to this system")

    @staticmethod
    def _deployment_manifest(doc: ManifestDoc, name: str, replicas: int) -> str:
        labels = dict(doc.labels)
        pod_spec = {k: v for k, v in (_spec(doc) or {}).items() if k != "restartPolicy"}
        body = {
            "apiVersion": "apps/v1",
            "kind": "Deployment",
            "metadata": {"name": name, "labels": labels},
            "spec": {
                "replicas": replicas,
                "selector": {"matchLabels": labels},
                "template": {"metadata": {"labels": labels}, "spec": pod_spec},
            },
        }
        return yaml.safe_dump(body, sort_keys=False)

    # -- replanning ---------------------------------------------------------------

    def adjust_fault_scope(self, diff: ChangeSummary, fault: Fault, new_snapshot: SystemSnapshot) -> SelectorSpec:
        # Label selectors survive pod/deployment swaps when labels are kept, so
        # the scope stays put unless its labels vanished from the new snapshot.
        labels = dict(fault.scope.label_selectors)
        if labels:
            for doc in new_snapshot.manifests.values():
                if doc.kind in ("Pod", "Deployment") and all(
                    _pod_labels(doc).get(k) == v for k, v in labels.items()
                ):
                    return fault.scope
        return fault.scope

    def adjust_vac(
        self,
        diff: ChangeSummary,
        state: SteadyState,
        new_snapshot: SystemSnapshot,
    ) -> Optional[VaCSpec]:
        target = state.vac.target
        if target.url:
            return None
        doc = next(
            (d for d in new_snapshot.manifests.values() if d.name == target.name and d.kind == target.kind),
            None,
        )
        if doc is not None:
            return None  # target unchanged
        # The named resource is gone: retarget by the labels of whichever
        # workload replaced it.
        for delta in diff.changes:
            if delta.kind_change or delta.name_change:
                new_docs = new_snapshot.docs_for(delta.path)
                if not new_docs:
                    continue
                new_doc = new_docs[0]
                labels = _pod_labels(new_doc)
                version = state.vac.version + 1
                suffix = state.vac.script_path.rsplit("_mod", 1)[0]
                new_path = f"{suffix}_mod{version}.py"
                return VaCSpec(
                    tool=state.vac.tool,
                    target=ProbeTarget(
                        namespace=new_doc.namespace,
                        kind="Pod",
                        name="",
                        label_selectors=labels,
                    ),
                    script_path=new_path,
                    version=version,
                )
        return None

    def summarize_cycle(self, context: CycleContext, history_text: str) -> str:
        summary = (
            f"chaos-engineering cycle over {len(context.snapshot.manifests)} manifests "
            f"({context.application}).\n{history_text}"
        )
        self._charge("post-processing", history_text, summary)
        return summary
