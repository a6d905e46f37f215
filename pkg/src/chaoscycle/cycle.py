"""The six-phase chaos-engineering cycle state machine with the improvement
loop, wired to a planner, compiler, execution backend, and workspace."""

from __future__ import annotations

import json
import shutil
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from .agents.ledger import CostLedger
from .agents.loop import Attempt, Exhausted, verification_loop
from .agents.planner import CycleContext, Planner, ScheduleEntry
from .agents.stub import StubPlanner
from .backends import ExecutionBackend, SteadyStateProbe, make_backend
from .compiler import (
    DEFAULT_TASK_PAD,
    ExperimentPlan,
    STAGE_ORDER,
    ScheduleItem,
    Stage,
    WorkflowMeta,
    compute_deadlines,
    emit_workflow,
    group_nodes,
    patch_workflow,
    retarget_plan,
    structural_diff,
    validate_plan,
)
from .domain import (
    CyclePhase,
    CycleState,
    DomainError,
    Duration,
    ExperimentResult,
    FailureScenario,
    Fault,
    Hypothesis,
    ImprovementRecord,
    SteadyState,
    VaCSpec,
    hypothesis_satisfied,
)
from .manifests import ReconfigAction, SystemSnapshot, apply_reconfig, diff_snapshots, import_project
from .simulator import Timeline
from .vac import render_probe_script


class CycleStatus(str, Enum):
    SATISFIED = "satisfied"
    SATISFIED_WITHOUT_CHANGE = "satisfied-without-change"
    RETRIES_EXHAUSTED = "retries-exhausted"


@dataclass
class CycleConfig:
    max_steady_states: int = 2
    max_retries: int = 3
    seed: int = 42
    temperature: float = 0.0
    clean_before: bool = False
    clean_after: bool = False
    backend: str = "simulator"
    planner: str = "stub"
    instructions: str = ""
    cycle_name: Optional[str] = None
    restart_delay: int = 3
    cold_start_delay: int = 300
    task_pad: Duration = field(default_factory=lambda: DEFAULT_TASK_PAD)
    baseline_window: Duration = field(default_factory=lambda: Duration(5))

    def __post_init__(self) -> None:
        if self.max_retries < 1:
            raise DomainError("max_retries must be >= 1")
        if self.max_steady_states < 1:
            raise DomainError("max_steady_states must be >= 1")


@dataclass
class CycleOutput:
    status: CycleStatus
    summary: str
    final_snapshot: SystemSnapshot
    history: CycleState
    ledger: CostLedger
    workspace: Path
    hypothesis: Optional[Hypothesis] = None
    plan: Optional[ExperimentPlan] = None
    workflows: list[str] = field(default_factory=list)
    results: list[ExperimentResult] = field(default_factory=list)
    timelines: list[Timeline] = field(default_factory=list)
    failure_reason: str = ""

    @property
    def exit_code(self) -> int:
        return 0 if self.status in (CycleStatus.SATISFIED, CycleStatus.SATISFIED_WITHOUT_CHANGE) else 2


class AnalysisDecision(str, Enum):
    FINISH = "finish"
    PROCEED = "proceed-to-improvement"


@dataclass(frozen=True)
class AnalysisInput:
    """Exactly what the analysis step receives: manifests, the timeline
    summary, and the failed runs with their logs."""

    manifest_paths: tuple[str, ...]
    plan_summary: str
    failed: tuple[tuple[str, str], ...]


def analysis_gate(
    result: ExperimentResult, plan_summary: str = "", snapshot: Optional[SystemSnapshot] = None
) -> tuple[AnalysisDecision, Optional[AnalysisInput]]:
    """Mechanical check: finish iff every VaC passed, else assemble the
    analysis input."""
    if hypothesis_satisfied(result):
        return AnalysisDecision.FINISH, None
    failed = tuple((o.name, o.log) for o in result.failed())
    paths = tuple(snapshot.manifest_paths) if snapshot is not None else ()
    return AnalysisDecision.PROCEED, AnalysisInput(
        manifest_paths=paths, plan_summary=plan_summary, failed=failed
    )


def _make_planner(config: CycleConfig, ledger: CostLedger) -> Planner:
    if config.planner == "stub":
        return StubPlanner(ledger=ledger)
    if config.planner == "llm":
        from .agents.client import ChatClient
        from .agents.llm import LLMPlanner

        client = ChatClient.from_env(ledger=ledger)
        return LLMPlanner(client, temperature=config.temperature, seed=config.seed)
    raise DomainError(f"unknown planner {config.planner!r}")


class _Workspace:
    """Cycle output layout: inputs_v*/, hypothesis/, experiment/, results/,
    analysis/, summary.md, ledger.json."""

    def __init__(self, root: Path):
        self.root = root
        root.mkdir(parents=True, exist_ok=True)
        for sub in ("hypothesis", "experiment", "results", "analysis"):
            (root / sub).mkdir(exist_ok=True)

    def write(self, rel: str, text: str) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return path


class CycleRunner:
    """One chaos-engineering cycle over one workspace."""

    def __init__(
        self,
        project_path: str | Path,
        config: CycleConfig,
        out_dir: str | Path,
        planner: Optional[Planner] = None,
        backend: Optional[ExecutionBackend] = None,
    ):
        self.config = config
        self.ledger = CostLedger()
        self.planner = planner if planner is not None else _make_planner(config, self.ledger)
        if isinstance(self.planner, StubPlanner):
            self.ledger = self.planner.ledger
        self.backend = backend if backend is not None else make_backend(
            config.backend, restart_delay=config.restart_delay, cold_start_delay=config.cold_start_delay
        )
        self.workspace = _Workspace(Path(out_dir))
        self.project_path = Path(project_path)
        self.cycle_name = config.cycle_name or f"cycle_{time.strftime('%Y%m%d-%H%M%S')}"
        self.state = CycleState()
        self.workflows: list[str] = []
        self.results: list[ExperimentResult] = []
        self.timelines: list[Timeline] = []
        self.snapshot: Optional[SystemSnapshot] = None

    # -- helpers -----------------------------------------------------------

    def _timed(self, phase: CyclePhase):
        runner = self

        class _Timer:
            def __enter__(self_inner):
                runner.state.phase = phase
                self_inner.start = time.monotonic()
                return self_inner

            def __exit__(self_inner, *exc):
                runner.ledger.record_time(phase, time.monotonic() - self_inner.start)
                return False

        return _Timer()

    # -- phase 0 -------------------------------------------------------------

    def preprocess(self) -> CycleContext:
        # Context filling (with its instruction filtering) runs before
        # deployment so a live backend never deploys unvetted input.
        with self._timed(CyclePhase.PRE_PROCESSING):
            self.snapshot = import_project(self.project_path, self.workspace.root)
            context = self.planner.fill_context(self.snapshot, self.config.instructions)
            self.backend.deploy(self.snapshot)
        return context

    # -- phase 1 -------------------------------------------------------------

    def hypothesis_phase(self, context: CycleContext) -> Hypothesis:
        """Steady-state loop plus scenario drafting with dry-run verification."""
        with self._timed(CyclePhase.HYPOTHESIS):
            states: list[SteadyState] = []
            while len(states) < self.config.max_steady_states:
                state = self._define_steady_state(context, states)
                states.append(state)
                if len(states) >= self.config.max_steady_states:
                    break
                if not self.planner.needs_more_steady_states(context, states):
                    break

            draft = self.planner.draft_scenario(context, states)
            groups: list[tuple[Fault, ...]] = []
            for group in draft.groups:
                detailed = []
                for sketch in group:
                    outcome = verification_loop(
                        step=lambda transcript, s=sketch: self.planner.detail_fault(
                            context, states, s, transcript
                        ),
                        verify=self.backend.dry_run,
                        max_retries=self.config.max_retries,
                    )
                    detailed.append(outcome.value)
                groups.append(tuple(detailed))
            if not any(groups):
                raise DomainError("failure scenario is empty; nothing to inject")
            scenario = FailureScenario(event=draft.event, description=draft.description, sequence=tuple(groups))
            hypothesis = Hypothesis(steady_states=tuple(states), scenario=scenario)
            self.workspace.write("hypothesis/hypothesis.json", json.dumps(hypothesis.to_json(), indent=2))
        return hypothesis

    def _define_steady_state(self, context: CycleContext, defined: list[SteadyState]) -> SteadyState:
        def step(transcript: list[Attempt]):
            draft = self.planner.draft_steady_state(context, defined, transcript)
            baseline = self.backend.measure_baseline(
                SteadyStateProbe(draft.name, draft.vac, draft.threshold),
                self.config.baseline_window,
            )
            return draft, baseline

        def verify(value) -> Optional[str]:
            draft, baseline = value
            if any(s.name == draft.name for s in defined):
                return f"steady state name {draft.name!r} already defined"
            if not draft.threshold.satisfied_by(baseline.measured):
                return (
                    f"threshold {draft.threshold.metric.value} {draft.threshold.comparator.value} "
                    f"{draft.threshold.value} is not satisfied by the observed baseline "
                    f"{baseline.measured}; thresholds must hold in the normal state"
                )
            return None

        outcome = verification_loop(step, verify, self.config.max_retries)
        draft, baseline = outcome.value
        script = render_probe_script(draft.vac, draft.threshold, vus=draft.vus)
        self.workspace.write(draft.vac.script_path, script)
        self.workspace.write(f"hypothesis/baseline_{draft.name}.log", baseline.log)
        return SteadyState(
            name=draft.name,
            description=draft.description,
            threshold=draft.threshold,
            vac=draft.vac,
            baseline=baseline.measured,
        )

    # -- phase 2 -------------------------------------------------------------

    def plan_experiment(self, context: CycleContext, hypothesis: Hypothesis) -> ExperimentPlan:
        with self._timed(CyclePhase.EXPERIMENT):
            def times_step(transcript):
                return self.planner.plan_stage_times(context, hypothesis)

            def times_verify(times) -> Optional[str]:
                if times.pre + times.fault + times.post != times.total:
                    return "total_time must equal the sum of the three stage times"
                return None

            times = verification_loop(times_step, times_verify, self.config.max_retries).value

            stages: dict[Stage, tuple[ScheduleItem, ...]] = {}
            for stage in STAGE_ORDER:
                stage_time = {
                    Stage.PRE: times.pre,
                    Stage.FAULT: times.fault,
                    Stage.POST: times.post,
                }[stage]

                def schedule_step(transcript, s=stage, t=stage_time):
                    entries = self.planner.plan_stage_schedule(context, hypothesis, s.value, t, transcript)
                    return self._attach_payloads(entries, hypothesis)

                def schedule_verify(items, s=stage, t=stage_time) -> Optional[str]:
                    partial = ExperimentPlan(
                        total_time=times.total,
                        pre_time=times.pre,
                        fault_time=times.fault,
                        post_time=times.post,
                        stages={s: tuple(items)},
                    )
                    problems = [v for v in validate_plan(partial, hypothesis) if v.stage == s.value]
                    if problems:
                        return "; ".join(str(p) for p in problems)
                    return None

                items = verification_loop(schedule_step, schedule_verify, self.config.max_retries).value
                stages[stage] = tuple(items)

            plan = ExperimentPlan(
                total_time=times.total,
                pre_time=times.pre,
                fault_time=times.fault,
                post_time=times.post,
                stages=stages,
            )
            problems = validate_plan(plan, hypothesis)
            if problems:
                raise DomainError("plan failed validation: " + "; ".join(str(p) for p in problems))
            summary = self.planner.summarize_plan(context, plan.to_json())
            plan = replace(plan, summary=summary)
            self.workspace.write("experiment/plan.json", json.dumps(plan.to_json(), indent=2))
            self.workspace.write("experiment/summary.txt", summary)
        return plan

    def _attach_payloads(self, entries: Sequence[ScheduleEntry], hypothesis: Hypothesis) -> list[ScheduleItem]:
        by_ref = {(f.kind, f.name_id): f for f in hypothesis.scenario.all_faults()}
        items: list[ScheduleItem] = []
        for entry in entries:
            if entry.is_fault:
                fault = by_ref.get(entry.fault_ref)
                if fault is None:
                    raise DomainError(f"schedule references unknown fault {entry.fault_ref}")
                items.append(
                    ScheduleItem(
                        name=entry.name,
                        is_fault=True,
                        grace_period=entry.grace_period,
                        duration=entry.duration,
                        payload=fault,
                    )
                )
            else:
                state = hypothesis.steady_state(entry.name)
                items.append(
                    ScheduleItem(
                        name=entry.name,
                        is_fault=False,
                        grace_period=entry.grace_period,
                        duration=entry.duration,
                        payload=state.vac,
                    )
                )
        return items

    def compile_workflow(self, plan: ExperimentPlan) -> tuple[str, "object"]:
        meta = WorkflowMeta(name=f"chaos-experiment-{self.cycle_name}", workspace=f"sandbox/{self.cycle_name}")
        tree = compute_deadlines(group_nodes(plan), pad=self.config.task_pad)
        manifest = emit_workflow(tree, meta)
        return manifest, tree

    def execute(self, plan: ExperimentPlan, tree, hypothesis: Hypothesis, run_index: int) -> ExperimentResult:
        with self._timed(CyclePhase.EXPERIMENT):
            thresholds = {s.name: s.threshold for s in hypothesis.steady_states}
            timeline, result = self.backend.run(tree, plan, thresholds, seed=self.config.seed)
            self.timelines.append(timeline)
            self.results.append(result)
            self.workspace.write(f"results/timeline_v{run_index}.json", json.dumps(timeline.to_json(), indent=2))
            outcome_rows = [
                {"name": o.name, "passed": o.passed, "measured": o.measured, "log": o.log}
                for o in (result.outcomes[name] for name in result.scheduled)
            ]
            self.workspace.write(f"results/outcomes_v{run_index}.json", json.dumps(outcome_rows, indent=2))
        return result

    # -- phases 3 + 4: the improvement loop ------------------------------------

    def improvement_loop(
        self, context: CycleContext, hypothesis: Hypothesis, plan: ExperimentPlan, manifest: str, tree
    ) -> CycleStatus:
        result = self.execute(plan, tree, hypothesis, run_index=0)
        improvements = 0
        while True:
            with self._timed(CyclePhase.ANALYSIS):
                decision, analysis_input = analysis_gate(result, plan.summary, self.snapshot)
            if decision is AnalysisDecision.FINISH:
                return (
                    CycleStatus.SATISFIED_WITHOUT_CHANGE if improvements == 0 else CycleStatus.SATISFIED
                )
            if improvements >= self.config.max_retries:
                return CycleStatus.RETRIES_EXHAUSTED

            with self._timed(CyclePhase.ANALYSIS):
                report = self.planner.analyze(context, hypothesis, plan.summary, analysis_input.failed)
                self.workspace.write(f"analysis/report_v{improvements}.md", report)

            with self._timed(CyclePhase.IMPROVEMENT):
                batch = self._reconfigure(context, hypothesis, report)
                new_snapshot = apply_reconfig(self.snapshot, batch)
                self.state.record_improvement(
                    ImprovementRecord(result=result, report=report, actions=batch),
                    self.config.max_retries,
                )
                diff = diff_snapshots(self.snapshot, new_snapshot)
                self.snapshot = new_snapshot
                context.snapshot = new_snapshot
                self.backend.deploy(new_snapshot)

            with self._timed(CyclePhase.EXPERIMENT):
                hypothesis, plan, manifest, tree = self.replan_after_improvement(
                    context, diff, hypothesis, plan, manifest
                )
            improvements += 1
            result = self.execute(plan, tree, hypothesis, run_index=improvements)

    def _reconfigure(self, context: CycleContext, hypothesis: Hypothesis, report: str) -> list[ReconfigAction]:
        history_batches = [list(rec.actions) for rec in self.state.improvement_history]

        def step(transcript):
            return self.planner.reconfigure(context, hypothesis, report, history_batches, transcript)

        def verify(batch: list[ReconfigAction]) -> Optional[str]:
            if not batch:
                return "reconfiguration must change at least one file"
            signature = [(a.mode.value, a.fname, a.code) for a in batch]
            for previous in history_batches:
                if signature == [(a.mode.value, a.fname, a.code) for a in previous]:
                    return "this exact reconfiguration was already applied; propose a different one"
            existing = set(self.snapshot.manifest_paths)
            for action in batch:
                if action.mode.value == "create" and action.fname in existing:
                    return f"create {action.fname}: file already exists"
                if action.mode.value in ("replace", "delete") and action.fname not in existing:
                    return f"{action.mode.value} {action.fname}: no such file"
            return None

        return verification_loop(step, verify, self.config.max_retries).value

    def replan_after_improvement(
        self,
        context: CycleContext,
        diff,
        hypothesis: Hypothesis,
        plan: ExperimentPlan,
        manifest: str,
    ):
        """Selector/script retargeting after a reconfiguration.

        The workflow artifact is patched in place (only selectors and script
        paths); the simulation tree is recompiled from the retargeted plan and
        cross-checked against the patched manifest.
        """
        selector_updates: dict[str, "SelectorSpec"] = {}
        fault_updates: dict[tuple, Fault] = {}
        for group in hypothesis.scenario.sequence:
            for fault in group:
                def scope_step(transcript, f=fault):
                    return self.planner.adjust_fault_scope(diff, f, self.snapshot)

                def scope_verify(selector) -> Optional[str]:
                    probe = Fault(kind=fault.kind, name_id=fault.name_id, params=fault.params, scope=selector)
                    return self.backend.dry_run(probe)

                selector = verification_loop(scope_step, scope_verify, self.config.max_retries).value
                if selector.to_json() != fault.scope.to_json():
                    updated = Fault(
                        kind=fault.kind, name_id=fault.name_id, params=fault.params, scope=selector
                    )
                    fault_updates[(fault.kind, fault.name_id)] = updated

        vac_updates: dict[str, VaCSpec] = {}
        new_states: list[SteadyState] = []
        for state in hypothesis.steady_states:
            new_vac = self.planner.adjust_vac(diff, state, self.snapshot)
            if new_vac is None:
                new_states.append(state)
                continue
            script = render_probe_script(new_vac, state.threshold)
            self.workspace.write(new_vac.script_path, script)
            vac_updates[state.name] = new_vac
            new_states.append(replace(state, vac=new_vac))

        new_scenario_groups = tuple(
            tuple(fault_updates.get((f.kind, f.name_id), f) for f in group)
            for group in hypothesis.scenario.sequence
        )
        new_hypothesis = Hypothesis(
            steady_states=tuple(new_states),
            scenario=FailureScenario(
                event=hypothesis.scenario.event,
                description=hypothesis.scenario.description,
                sequence=new_scenario_groups,
            ),
        )

        new_plan = retarget_plan(plan, vac_updates)
        if fault_updates:
            new_stages = {
                stage: tuple(
                    replace(item, payload=fault_updates.get((item.payload.kind, item.payload.name_id), item.payload))
                    if item.is_fault
                    else item
                    for item in new_plan.stages[stage]
                )
                for stage in STAGE_ORDER
            }
            new_plan = replace(new_plan, stages=new_stages)

        new_manifest, new_tree = self.compile_workflow(new_plan)

        # Dual route: patching the previous artifact must agree with the
        # recompiled manifest. Node names come from the recompiled tree so
        # only nodes that exist are patched.
        existing_nodes = {node.node_name for node in new_tree.walk()}
        node_selector_updates = {}
        if fault_updates:
            for leaf in new_tree.leaves():
                if leaf.fault is not None and (leaf.fault.kind, leaf.fault.name_id) in fault_updates:
                    node_selector_updates[leaf.node_name] = leaf.fault.scope
        node_script_updates = {}
        for state_name, new_vac in vac_updates.items():
            for prefix in ("pre-unittest-", "fault-unittest-", "post-unittest-"):
                node_name = f"{prefix}{state_name}"
                if node_name in existing_nodes:
                    node_script_updates[node_name] = f"sandbox/{self.cycle_name}/{new_vac.script_path}"
        patched = patch_workflow(manifest, node_selector_updates, node_script_updates)
        mismatches = structural_diff(patched, new_manifest)
        if mismatches:
            raise DomainError(
                "patched workflow disagrees with recompiled plan: " + "; ".join(mismatches[:5])
            )

        run_index = len(self.results)
        self.workspace.write(f"experiment/workflow_v{run_index}.yaml", patched)
        self.workflows.append(patched)
        return new_hypothesis, new_plan, patched, new_tree

    # -- whole cycle ----------------------------------------------------------

    def run(self) -> CycleOutput:
        failure_reason = ""
        status = CycleStatus.RETRIES_EXHAUSTED
        hypothesis: Optional[Hypothesis] = None
        plan: Optional[ExperimentPlan] = None
        try:
            context = self.preprocess()
            hypothesis = self.hypothesis_phase(context)
            plan = self.plan_experiment(context, hypothesis)
            manifest, tree = self.compile_workflow(plan)
            self.workflows.append(manifest)
            self.workspace.write("experiment/workflow_v0.yaml", manifest)
            status = self.improvement_loop(context, hypothesis, plan, manifest, tree)
        except Exhausted as exc:
            status = CycleStatus.RETRIES_EXHAUSTED
            failure_reason = str(exc)

        with self._timed(CyclePhase.POST_PROCESSING):
            history_text = self._history_text()
            try:
                summary = self.planner.summarize_cycle(
                    self._context_or_stub(), history_text
                ) if self.snapshot is not None else history_text
            except Exception:
                summary = history_text
            summary = f"status: {status.value}\n\n{summary}"
            if failure_reason:
                summary += f"\n\nstopped: {failure_reason}"
            self.workspace.write("summary.md", summary)
            self.workspace.write("ledger.json", self.ledger.dump())
            if self.snapshot is not None:
                final_dir = self.workspace.root / "final"
                if final_dir.exists():
                    shutil.rmtree(final_dir)
                shutil.copytree(self.snapshot.root, final_dir)

        return CycleOutput(
            status=status,
            summary=summary,
            final_snapshot=self.snapshot,
            history=self.state,
            ledger=self.ledger,
            workspace=self.workspace.root,
            hypothesis=hypothesis,
            plan=plan,
            workflows=self.workflows,
            results=self.results,
            timelines=self.timelines,
            failure_reason=failure_reason,
        )

    def _context_or_stub(self) -> CycleContext:
        return CycleContext(snapshot=self.snapshot, instructions=self.config.instructions)

    def _history_text(self) -> str:
        lines = []
        for index, result in enumerate(self.results, start=1):
            passed = [o.name for o in result.passed()]
            failed = [o.name for o in result.failed()]
            lines.append(f"experiment {index}: passed {passed}; failed {failed}")
        for index, record in enumerate(self.state.improvement_history, start=1):
            for action in record.actions:
                lines.append(f"improvement {index}: {action.mode.value} {action.fname} ({action.explanation})")
        return "\n".join(lines) or "no experiments executed"


def run_cycle(
    project_path: str | Path,
    config: CycleConfig,
    out_dir: str | Path,
    planner: Optional[Planner] = None,
    backend: Optional[ExecutionBackend] = None,
) -> CycleOutput:
    """Run one full cycle for a project folder or zip; see CycleRunner."""
    runner = CycleRunner(project_path, config, out_dir, planner=planner, backend=backend)
    return runner.run()
