"""Model-backed planner: renders agent prompts, parses schema-constrained
JSON replies, and maps them onto the domain types.

The structural contracts (placeholders, prefill, schema checking, retry
feedback) live here; reply quality is the model's problem.
"""

from __future__ import annotations

import json
from typing import Any, Mapping, Optional, Sequence

import yaml

from ..domain import (
    Comparator,
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
    parse_duration,
)
from ..faults import FAULT_SCHEMAS
from ..manifests import ChangeSummary, ReconfigAction, ReconfigMode, SystemSnapshot
from .client import ChatClient
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
from .schemas import OutputSchema, SchemaField, parse_structured_output
from .templates import PromptTemplate, load_prompt_templates, render_prompt

AGENT_SCHEMAS: dict[str, OutputSchema] = {
    "0-0": OutputSchema.of("k8s_summary"),
    "0-1": OutputSchema.of(SchemaField("issues", kind="array")),
    "0-2": OutputSchema.of("thought", "k8s_application"),
    "0-3": OutputSchema.of("ce_instructions"),
    "1-0": OutputSchema.of("thought", "manifest", "name"),
    "1-1": OutputSchema.of(
        SchemaField("thought"),
        SchemaField("tool_type", enum=("cluster-api", "load-test")),
        SchemaField("tool", kind="object"),
    ),
    "1-2": OutputSchema.of(SchemaField("thought"), SchemaField("threshold", kind="object")),
    "1-3-a": OutputSchema.of("thought", "code"),
    "1-3-b": OutputSchema.of("thought", "code"),
    "1-4": OutputSchema.of(SchemaField("thought"), SchemaField("requires_addition", kind="boolean")),
    "1-5": OutputSchema.of(SchemaField("event"), SchemaField("thought"), SchemaField("faults", kind="array")),
    "2-0": OutputSchema.of(
        "thought", "total_time", "pre_validation_time", "fault_injection_time", "post_validation_time"
    ),
    "2-2": OutputSchema.of("summary"),
    "2-3": OutputSchema.of(SchemaField("thought"), SchemaField("selector", kind="object")),
    "2-4": OutputSchema.of(SchemaField("thought"), SchemaField("code", required=False)),
    "3-0": OutputSchema.of("report"),
    "4-0": OutputSchema.of(SchemaField("thought"), SchemaField("modified_k8s_yamls", kind="array")),
    "EX": OutputSchema.of("summary"),
}


def fault_param_schema(kind: FaultKind) -> OutputSchema:
    """Per-kind detailing schema; the kind picks the dynamic instruction."""
    schema = FAULT_SCHEMAS[kind]
    fields: list[SchemaField] = []
    lead_order = ("action", "timeOffset", "mode")
    names = list(schema.known_fields)
    original = {n: i for i, n in enumerate(names)}
    names.sort(key=lambda n: (lead_order.index(n) if n in lead_order else len(lead_order), original[n]))
    for name in names:
        if name == "selector":
            fields.append(SchemaField("selector", kind="object", required=True))
            continue
        enum = tuple(schema.field_domains.get(name, ()))
        kind_name = "object" if name in ("stressors", "target", "delay", "replace", "patch", "attr", "mistake", "request_headers") else "string"
        if name in ("containerNames", "patterns", "methods", "externalTargets", "clockIds"):
            kind_name = "array"
        if name in ("port", "code", "percent", "errno"):
            kind_name = "integer"
        if name == "abort":
            kind_name = "boolean"
        fields.append(
            SchemaField(
                name,
                kind=kind_name,
                required=name in schema.required_fields,
                enum=enum,
            )
        )
    return OutputSchema(fields=tuple(fields))


def stage_schedule_schema(stage: str) -> OutputSchema:
    if stage == "failure-injection":
        return OutputSchema.of(
            SchemaField("thought"),
            SchemaField("fault_injection", kind="array"),
            SchemaField("unit_tests", kind="array"),
        )
    return OutputSchema.of(SchemaField("thought"), SchemaField("unit_tests", kind="array"))


def _transcript_messages(messages: list[dict[str, str]], transcript: Sequence[Attempt]) -> list[dict[str, str]]:
    """Verification-loop convention: prior outputs and their errors extend the
    conversation instead of starting a fresh one."""
    out = list(messages)
    for attempt in transcript:
        if attempt.error is None:
            continue
        out.append({"role": "assistant", "content": json.dumps(attempt.value) if attempt.value is not None else ""})
        out.append(
            {
                "role": "user",
                "content": (
                    "The previous output failed verification with this error:\n"
                    f"{attempt.error}\n"
                    "Fix only what the error names and reply in the same JSON format."
                ),
            }
        )
    return out


class LLMPlanner(Planner):
    """Planner backed by a chat-completion client."""

    def __init__(
        self,
        client: ChatClient,
        temperature: float = 0.0,
        seed: Optional[int] = None,
        script_dir: str = "hypothesis",
    ):
        self.client = client
        self.temperature = temperature
        self.seed = seed
        self.script_dir = script_dir
        self.templates: dict[str, PromptTemplate] = load_prompt_templates()

    # -- plumbing -------------------------------------------------------

    def _ask(
        self,
        agent_id: str,
        bindings: Mapping[str, str],
        schema: Optional[OutputSchema] = None,
        conditions: Mapping[str, str] | None = None,
        transcript: Sequence[Attempt] = (),
    ) -> dict[str, Any]:
        template = self.templates[agent_id]
        schema = schema or AGENT_SCHEMAS[agent_id]
        messages = render_prompt(template, bindings, conditions)
        messages = _transcript_messages(messages, transcript)
        response = self.client.chat_complete(
            messages, schema, temperature=self.temperature, seed=self.seed
        )
        return parse_structured_output(response.text, schema)

    @staticmethod
    def _manifest_blob(snapshot: SystemSnapshot) -> str:
        chunks = []
        for path in snapshot.manifest_paths:
            chunks.append(f"```{path}\n{snapshot.read_file(path)}```")
        return "\n\n".join(chunks)

    def _overview(self, context: CycleContext) -> str:
        weaknesses = "\n".join(
            f"- {w.name}: {w.details} ({', '.join(w.manifests)}; {w.problematic_config})"
            for w in context.weaknesses
        )
        return (
            f"{self._manifest_blob(context.snapshot)}\n\n"
            f"# Known weaknesses\n{weaknesses or '- none flagged'}\n\n"
            f"# Likely application\n{context.application}"
        )

    @staticmethod
    def _states_blob(states: Sequence[SteadyState]) -> str:
        return "\n".join(
            f"- {s.name}: {s.threshold.metric.value} {s.threshold.comparator.value} {s.threshold.value}"
            for s in states
        ) or "(none yet)"

    # -- phase 0 ----------------------------------------------------------

    def fill_context(self, snapshot: SystemSnapshot, instructions: str) -> CycleContext:
        self.client.set_phase("pre-processing")
        summaries: dict[str, str] = {}
        for path in snapshot.manifest_paths:
            reply = self._ask("0-0", {"k8s_yaml": f"```{path}\n{snapshot.read_file(path)}```"})
            summaries[path] = reply["k8s_summary"]
        issues = self._ask("0-1", {"k8s_yamls": self._manifest_blob(snapshot)})["issues"]
        weaknesses = [
            Weakness(
                name=issue.get("issue_name", f"issue-{i}"),
                details=issue.get("issue_details", ""),
                manifests=tuple(issue.get("manifests", ())),
                problematic_config=issue.get("problematic_config", ""),
                tag=issue.get("issue_name", ""),
            )
            for i, issue in enumerate(issues)
        ]
        application = self._ask("0-2", {"user_input": self._manifest_blob(snapshot)})["k8s_application"]
        filtered = instructions
        if instructions.strip():
            filtered = self._ask("0-3", {"ce_instructions": instructions})["ce_instructions"]
        return CycleContext(
            snapshot=snapshot,
            instructions=filtered,
            summaries=summaries,
            weaknesses=weaknesses,
            application=application,
        )

    # -- phase 1 ----------------------------------------------------------

    def draft_steady_state(
        self,
        context: CycleContext,
        defined: Sequence[SteadyState],
        transcript: Sequence[Attempt],
    ) -> SteadyStateDraft:
        self.client.set_phase("hypothesis")
        bindings = {
            "user_input2": self._overview(context),
            "ce_instructions": context.instructions or "(none)",
            "predefined_steady_states": self._states_blob(defined),
            "prev_check_thought": "pick the weakest unprobed resource",
        }
        drafted = self._ask("1-0", bindings, transcript=transcript)
        name = drafted["name"].lower()
        tool_reply = self._ask(
            "1-1",
            {
                "user_input2": self._overview(context),
                "steady_state_name": name,
                "steady_state_thought": drafted["thought"],
            },
        )
        threshold_reply = self._ask(
            "1-2",
            {
                "user_input2": self._overview(context),
                "steady_state_name": name,
                "steady_state_thought": drafted["thought"],
                "inspection_summary": json.dumps(tool_reply["tool"]),
                "ce_instructions": context.instructions or "(none)",
            },
        )
        threshold = ThresholdSpec(
            metric=Metric(threshold_reply["threshold"]["metric"]),
            comparator=Comparator(threshold_reply["threshold"]["comparator"]),
            value=threshold_reply["threshold"]["value"],
            description=threshold_reply["threshold"].get("description", ""),
        )
        tool = ProbeTool(tool_reply["tool_type"])
        target = ProbeTarget.from_json(tool_reply["tool"].get("target", tool_reply["tool"]))
        suffix = "js" if tool is ProbeTool.LOAD_TEST else "py"
        vac = VaCSpec(
            tool=tool,
            target=target,
            script_path=f"{self.script_dir}/unittest_{name}_mod0.{suffix}",
        )
        return SteadyStateDraft(
            name=name,
            description=drafted["thought"],
            threshold=threshold,
            vac=vac,
            vus=int(tool_reply["tool"].get("vus", 1)),
        )

    def needs_more_steady_states(self, context: CycleContext, defined: Sequence[SteadyState]) -> bool:
        self.client.set_phase("hypothesis")
        reply = self._ask(
            "1-4",
            {
                "user_input2": self._overview(context),
                "ce_instructions": context.instructions or "(none)",
                "predefined_steady_states": self._states_blob(defined),
            },
        )
        return bool(reply["requires_addition"])

    def draft_scenario(self, context: CycleContext, states: Sequence[SteadyState]) -> ScenarioDraft:
        self.client.set_phase("hypothesis")
        reply = self._ask(
            "1-5",
            {
                "user_input2": self._overview(context),
                "steady_states": self._states_blob(states),
                "ce_instructions": context.instructions or "(none)",
            },
        )
        groups = []
        for group in reply["faults"]:
            sketches = tuple(
                FaultSketch(
                    kind=FaultKind(fault["name"]),
                    name_id=int(fault["name_id"]),
                    scope_hint={str(k): str(v) for k, v in (fault.get("scope") or {}).items()},
                )
                for fault in group
            )
            groups.append(sketches)
        return ScenarioDraft(event=reply["event"], description=reply["thought"], groups=tuple(groups))

    def detail_fault(
        self,
        context: CycleContext,
        states: Sequence[SteadyState],
        sketch: FaultSketch,
        transcript: Sequence[Attempt],
    ) -> Fault:
        self.client.set_phase("hypothesis")
        schema = fault_param_schema(sketch.kind)
        reply = self._ask(
            "1-6",
            {
                "user_input2": self._overview(context),
                "steady_states": self._states_blob(states),
                "fault_scenario": json.dumps(dict(sketch.scope_hint)),
                "ce_instructions": context.instructions or "(none)",
                "refined_fault_type": sketch.kind.value,
            },
            schema=schema,
            conditions={"param_instructions": sketch.kind.value},
            transcript=transcript,
        )
        selector = SelectorSpec.from_json(reply.get("selector") or {})
        params = {k: v for k, v in reply.items() if k not in ("selector", "thought")}
        return Fault(kind=sketch.kind, name_id=sketch.name_id, params=params, scope=selector)

    # -- phase 2 ----------------------------------------------------------

    def plan_stage_times(self, context: CycleContext, hypothesis: Hypothesis) -> StageTimes:
        self.client.set_phase("experiment")
        reply = self._ask(
            "2-0",
            {
                "user_input2": self._overview(context),
                "steady_states": self._states_blob(hypothesis.steady_states),
                "detailed_fault_scenario": json.dumps(hypothesis.scenario.to_json()),
                "ce_instructions": context.instructions or "(none)",
            },
        )
        return StageTimes(
            total=parse_duration(reply["total_time"]),
            pre=parse_duration(reply["pre_validation_time"]),
            fault=parse_duration(reply["fault_injection_time"]),
            post=parse_duration(reply["post_validation_time"]),
        )

    def plan_stage_schedule(
        self,
        context: CycleContext,
        hypothesis: Hypothesis,
        stage: str,
        stage_time: Duration,
        transcript: Sequence[Attempt],
    ) -> list[ScheduleEntry]:
        self.client.set_phase("experiment")
        condition = "fault" if stage == "failure-injection" else "validation"
        phase_names = {
            "pre-valid": "pre-validation phase",
            "failure-injection": "fault-injection phase",
            "post-valid": "post-validation phase",
        }
        reply = self._ask(
            "2-1",
            {
                "user_input2": self._overview(context),
                "steady_states": self._states_blob(hypothesis.steady_states),
                "detailed_fault_scenario": json.dumps(hypothesis.scenario.to_json()),
                "ce_instructions": context.instructions or "(none)",
                "phase_name": phase_names[stage],
                "phase_total_time": str(stage_time),
            },
            schema=stage_schedule_schema(stage),
            conditions={"phase_instructions": condition},
            transcript=transcript,
        )
        entries: list[ScheduleEntry] = []
        for row in reply.get("fault_injection", []):
            entries.append(
                ScheduleEntry(
                    name=row["name"],
                    grace_period=parse_duration(row["grace_period"]),
                    duration=parse_duration(row["duration"]),
                    is_fault=True,
                    fault_ref=(FaultKind(row["name"]), int(row.get("name_id", 0))),
                )
            )
        for row in reply.get("unit_tests", []):
            entries.append(
                ScheduleEntry(
                    name=row["name"],
                    grace_period=parse_duration(row["grace_period"]),
                    duration=parse_duration(row["duration"]),
                )
            )
        return entries

    def summarize_plan(self, context: CycleContext, plan_json: Mapping) -> str:
        self.client.set_phase("experiment")
        return self._ask("2-2", {"experiment_plan": json.dumps(dict(plan_json))})["summary"]

    # -- phase 3 ----------------------------------------------------------

    def analyze(
        self,
        context: CycleContext,
        hypothesis: Hypothesis,
        plan_summary: str,
        failed: Sequence[tuple[str, str]],
    ) -> str:
        self.client.set_phase("analysis")
        result_blob = "\n".join(f"- {name}\n```log\n{log}\n```" for name, log in failed) or "(all passed)"
        return self._ask(
            "3-0",
            {
                "user_input2": self._overview(context),
                "steady_states": self._states_blob(hypothesis.steady_states),
                "detailed_fault_scenario": json.dumps(hypothesis.scenario.to_json()),
                "experiment_plan_summary": plan_summary,
                "experiment_result": result_blob,
            },
        )["report"]

    # -- phase 4 ----------------------------------------------------------

    def reconfigure(
        self,
        context: CycleContext,
        hypothesis: Hypothesis,
        report: str,
        history: Sequence[Sequence[ReconfigAction]],
        transcript: Sequence[Attempt],
    ) -> list[ReconfigAction]:
        self.client.set_phase("improvement")
        history_blob = "\n".join(
            f"- iteration {i}: " + "; ".join(f"{a.mode.value} {a.fname}" for a in batch)
            for i, batch in enumerate(history, start=1)
        ) or "(first improvement)"
        reply = self._ask(
            "4-0",
            {
                "user_input2": self._overview(context),
                "steady_states": self._states_blob(hypothesis.steady_states),
                "detailed_fault_scenario": json.dumps(hypothesis.scenario.to_json()),
                "experiment_plan_summary": "",
                "experiment_result": "",
                "analysis_report": report,
                "improvement_history": history_blob,
            },
            transcript=transcript,
        )
        actions = []
        for row in reply["modified_k8s_yamls"]:
            actions.append(
                ReconfigAction(
                    mode=ReconfigMode(row["mod_type"]),
                    fname=row["fname"],
                    explanation=row.get("explanation", ""),
                    code=row.get("code"),
                )
            )
        return actions

    # -- replanning --------------------------------------------------------

    def adjust_fault_scope(self, diff: ChangeSummary, fault: Fault, new_snapshot: SystemSnapshot) -> SelectorSpec:
        self.client.set_phase("experiment")
        reply = self._ask(
            "2-3",
            {
                "prev_k8s_yamls": diff.describe(),
                "experiment_plan_summary": "",
                "curr_k8s_yamls": self._manifest_blob(new_snapshot),
                "curr_fault_injection": json.dumps(fault.to_json()),
            },
        )
        return SelectorSpec.from_json(reply["selector"])

    def adjust_vac(
        self,
        diff: ChangeSummary,
        state: SteadyState,
        new_snapshot: SystemSnapshot,
    ) -> Optional[VaCSpec]:
        self.client.set_phase("experiment")
        reply = self._ask(
            "2-4",
            {
                "prev_k8s_yamls": diff.describe(),
                "curr_k8s_yamls": self._manifest_blob(new_snapshot),
                "prev_unittest": state.vac.script_path,
            },
        )
        if not reply.get("code"):
            return None
        version = state.vac.version + 1
        base = state.vac.script_path.rsplit("_mod", 1)[0]
        suffix = "js" if state.vac.tool is ProbeTool.LOAD_TEST else "py"
        return VaCSpec(
            tool=state.vac.tool,
            target=state.vac.target,
            script_path=f"{base}_mod{version}.{suffix}",
            version=version,
        )

    def summarize_cycle(self, context: CycleContext, history_text: str) -> str:
        self.client.set_phase("post-processing")
        return self._ask("EX", {"cycle_overview": history_text})["summary"]
