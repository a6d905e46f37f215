"""Three-stage experiment plans and their compilation into Chaos Mesh
Workflow manifests via hierarchical node grouping."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping, Optional, Union

import yaml

from .domain import (
    DomainError,
    Duration,
    Fault,
    Hypothesis,
    ProbeTool,
    SelectorSpec,
    VaCSpec,
    format_duration,
    parse_duration,
)
from .faults import BODY_KEYS, parse_fault_body, render_fault_body, validate_fault
from .vac import CLUSTER_API_IMAGE, LOAD_TEST_IMAGE, WORKSPACE_MOUNT, runner_command

DEFAULT_TASK_PAD = Duration(300)

WORKFLOW_API_VERSION = "chaos-mesh.org/v1alpha1"
ENTRY_NODE_NAME = "the-entry"


class Stage(str, Enum):
    PRE = "pre-valid"
    FAULT = "failure-injection"
    POST = "post-valid"


STAGE_ORDER = (Stage.PRE, Stage.FAULT, Stage.POST)

# Node-name prefixes per stage.
_STAGE_PREFIX = {
    Stage.PRE: "pre-validation",
    Stage.FAULT: "fault-injection",
    Stage.POST: "post-validation",
}
_UNITTEST_PREFIX = {Stage.PRE: "pre-unittest-", Stage.FAULT: "fault-unittest-", Stage.POST: "post-unittest-"}


class NodeType(str, Enum):
    TASK = "Task"
    FAILURE = "Failure"
    SUSPEND = "Suspend"
    SERIAL = "Serial"
    PARALLEL = "Parallel"


GROUP_TYPES = frozenset({NodeType.SERIAL, NodeType.PARALLEL})


@dataclass(frozen=True)
class ScheduleItem:
    """One scheduled unit: a VaC run or a fault injection within a stage."""

    name: str
    is_fault: bool
    grace_period: Duration
    duration: Duration
    payload: Union[VaCSpec, Fault]

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "is_fault": self.is_fault,
            "grace_period": format_duration(self.grace_period),
            "duration": format_duration(self.duration),
            "payload": self.payload.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ScheduleItem":
        is_fault = data["is_fault"]
        payload = Fault.from_json(data["payload"]) if is_fault else VaCSpec.from_json(data["payload"])
        return cls(
            name=data["name"],
            is_fault=is_fault,
            grace_period=parse_duration(data["grace_period"]),
            duration=parse_duration(data["duration"]),
            payload=payload,
        )


@dataclass(frozen=True)
class ExperimentPlan:
    """Stage durations plus per-stage schedules."""

    total_time: Duration
    pre_time: Duration
    fault_time: Duration
    post_time: Duration
    stages: Mapping[Stage, tuple[ScheduleItem, ...]]
    summary: str = ""

    def __post_init__(self) -> None:
        normalized = {Stage(k): tuple(v) for k, v in dict(self.stages).items()}
        for stage in STAGE_ORDER:
            normalized.setdefault(stage, ())
        object.__setattr__(self, "stages", normalized)

    def stage_time(self, stage: Stage) -> Duration:
        return {Stage.PRE: self.pre_time, Stage.FAULT: self.fault_time, Stage.POST: self.post_time}[stage]

    def stage_offset(self, stage: Stage) -> Duration:
        offset = Duration(0)
        for candidate in STAGE_ORDER:
            if candidate is stage:
                return offset
            offset = offset + self.stage_time(candidate)
        raise KeyError(stage)

    def items(self) -> list[tuple[Stage, ScheduleItem]]:
        return [(stage, item) for stage in STAGE_ORDER for item in self.stages[stage]]

    def to_json(self) -> dict[str, Any]:
        return {
            "total_time": format_duration(self.total_time),
            "pre_time": format_duration(self.pre_time),
            "fault_time": format_duration(self.fault_time),
            "post_time": format_duration(self.post_time),
            "stages": {stage.value: [item.to_json() for item in self.stages[stage]] for stage in STAGE_ORDER},
            "summary": self.summary,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ExperimentPlan":
        return cls(
            total_time=parse_duration(data["total_time"]),
            pre_time=parse_duration(data["pre_time"]),
            fault_time=parse_duration(data["fault_time"]),
            post_time=parse_duration(data["post_time"]),
            stages={
                Stage(name): tuple(ScheduleItem.from_json(item) for item in items)
                for name, items in data.get("stages", {}).items()
            },
            summary=data.get("summary", ""),
        )


@dataclass
class WorkflowNode:
    """One node of the workflow tree. Leaves carry a body; groups carry children."""

    node_name: str
    node_type: NodeType
    deadline: Optional[Duration] = None
    children: list["WorkflowNode"] = field(default_factory=list)
    # Task leaves
    vac: Optional[VaCSpec] = None
    run_duration: Optional[Duration] = None
    task_body: Optional[dict[str, Any]] = None
    # Failure leaves
    fault: Optional[Fault] = None
    failure_body: Optional[tuple[str, dict[str, Any]]] = None
    # Grouping metadata (not emitted)
    stage: Optional[Stage] = None
    stage_time: Optional[Duration] = None
    is_stage_wrapper: bool = False

    def __post_init__(self) -> None:
        if self.node_type in GROUP_TYPES and not self.children:
            raise DomainError(f"group node {self.node_name} needs at least one child")
        if self.node_type not in GROUP_TYPES and self.children:
            raise DomainError(f"leaf node {self.node_name} must not have children")

    def walk(self) -> Iterable["WorkflowNode"]:
        yield self
        for child in self.children:
            yield from child.walk()

    def leaves(self) -> list["WorkflowNode"]:
        return [n for n in self.walk() if n.node_type not in GROUP_TYPES]


@dataclass(frozen=True)
class PlanViolation:
    stage: Optional[str]
    item: Optional[str]
    message: str

    def __str__(self) -> str:
        where = " / ".join(p for p in (self.stage, self.item) if p)
        return f"{where}: {self.message}" if where else self.message


def validate_plan(plan: ExperimentPlan, hypothesis: Optional[Hypothesis] = None) -> list[PlanViolation]:
    """Check the stage-sum identity, per-item bounds, and payload validity.

    With a hypothesis given, also resolves every unit-test name to a steady
    state and every fault to the scenario.
    """
    violations: list[PlanViolation] = []
    stage_sum = plan.pre_time + plan.fault_time + plan.post_time
    if stage_sum != plan.total_time:
        violations.append(
            PlanViolation(
                None,
                None,
                f"total_time {format_duration(plan.total_time)} != stage sum {format_duration(stage_sum)}",
            )
        )
    known_states = {s.name for s in hypothesis.steady_states} if hypothesis else None
    known_faults = {(f.kind, f.name_id) for f in hypothesis.scenario.all_faults()} if hypothesis else None

    for stage in STAGE_ORDER:
        stage_time = plan.stage_time(stage)
        if not plan.stages[stage]:
            violations.append(PlanViolation(stage.value, None, "stage has no schedule items"))
        for item in plan.stages[stage]:
            end = item.grace_period + item.duration
            if end.seconds > stage_time.seconds:
                violations.append(
                    PlanViolation(
                        stage.value,
                        item.name,
                        f"grace {format_duration(item.grace_period)} + duration "
                        f"{format_duration(item.duration)} exceeds stage time {format_duration(stage_time)}",
                    )
                )
            if item.duration.seconds < 1:
                violations.append(PlanViolation(stage.value, item.name, "duration must be >= 1s"))
            if item.is_fault:
                if stage is not Stage.FAULT:
                    violations.append(PlanViolation(stage.value, item.name, "fault scheduled outside failure-injection"))
                if not isinstance(item.payload, Fault):
                    violations.append(PlanViolation(stage.value, item.name, "fault item payload must be a Fault"))
                else:
                    fault_violations, _ = validate_fault(item.payload)
                    for fv in fault_violations:
                        violations.append(PlanViolation(stage.value, item.name, str(fv)))
                    if known_faults is not None and (item.payload.kind, item.payload.name_id) not in known_faults:
                        violations.append(PlanViolation(stage.value, item.name, "fault not in scenario"))
            else:
                if not isinstance(item.payload, VaCSpec):
                    violations.append(PlanViolation(stage.value, item.name, "unit-test item payload must be a VaCSpec"))
                if known_states is not None and item.name not in known_states:
                    violations.append(PlanViolation(stage.value, item.name, "no steady state with this name"))
    return violations


_SANITIZE_RE = re.compile(r"[^a-z0-9]+")


def sanitize_node_name(raw: str, taken: set[str]) -> str:
    base = _SANITIZE_RE.sub("-", raw.lower()).strip("-") or "node"
    name = base
    suffix = 2
    while name in taken:
        name = f"{base}-{suffix}"
        suffix += 1
    taken.add(name)
    return name


def _fault_leaf_names(items: list[ScheduleItem]) -> dict[int, str]:
    """fault-<kindlowercase>, plus -<name_id+1> only when a kind repeats."""
    kind_counts: dict[str, int] = {}
    for item in items:
        if item.is_fault and isinstance(item.payload, Fault):
            kind_counts[item.payload.kind.value] = kind_counts.get(item.payload.kind.value, 0) + 1
    names: dict[int, str] = {}
    for index, item in enumerate(items):
        if not item.is_fault or not isinstance(item.payload, Fault):
            continue
        kind_lower = item.payload.kind.value.lower()
        if kind_counts[item.payload.kind.value] > 1:
            names[index] = f"fault-{kind_lower}-{item.payload.name_id + 1}"
        else:
            names[index] = f"fault-{kind_lower}"
    return names


def group_nodes(plan: ExperimentPlan) -> WorkflowNode:
    """Build the workflow tree for a validated plan.

    Items sharing a grace period run in parallel behind one shared suspend;
    grace-zero items start with the stage. The three stage subtrees are
    serialized under the entry node.
    """
    violations = validate_plan(plan)
    if violations:
        raise DomainError("invalid plan: " + "; ".join(str(v) for v in violations))

    taken: set[str] = {ENTRY_NODE_NAME}
    stage_nodes: list[WorkflowNode] = []
    for stage in STAGE_ORDER:
        prefix = _STAGE_PREFIX[stage]
        items = list(plan.stages[stage])
        fault_names = _fault_leaf_names(items)

        leaves: list[WorkflowNode] = []
        for index, item in enumerate(items):
            if item.is_fault:
                raw_name = fault_names[index]
                leaf = WorkflowNode(
                    node_name=sanitize_node_name(raw_name, taken),
                    node_type=NodeType.FAILURE,
                    fault=item.payload,
                    run_duration=item.duration,
                    stage=stage,
                )
            else:
                raw_name = _UNITTEST_PREFIX[stage] + item.name
                leaf = WorkflowNode(
                    node_name=sanitize_node_name(raw_name, taken),
                    node_type=NodeType.TASK,
                    vac=item.payload,
                    run_duration=item.duration,
                    stage=stage,
                )
            leaves.append(leaf)

        # Group by grace value, order of first occurrence.
        groups: dict[int, list[WorkflowNode]] = {}
        for item, leaf in zip(items, leaves):
            groups.setdefault(item.grace_period.seconds, []).append(leaf)

        any_suspend = any(grace > 0 for grace in groups)
        children: list[WorkflowNode] = []
        suspend_count = 0
        parallel_count = 0
        if len(groups) == 1 and not any_suspend:
            only = next(iter(groups.values()))
            stage_parallel = WorkflowNode(
                node_name=sanitize_node_name(f"{prefix}-parallel-workflows", taken),
                node_type=NodeType.PARALLEL,
                children=only,
                stage=stage,
            )
        else:
            for grace, members in groups.items():
                if len(members) == 1:
                    inner: WorkflowNode = members[0]
                else:
                    if grace == 0:
                        inner_name = f"{prefix}-parallel-workflow"
                    else:
                        parallel_count += 1
                        inner_name = f"{prefix}-parallel-workflows" + ("" if parallel_count == 1 else str(parallel_count))
                    inner = WorkflowNode(
                        node_name=sanitize_node_name(inner_name, taken),
                        node_type=NodeType.PARALLEL,
                        children=members,
                        stage=stage,
                    )
                if grace > 0:
                    suspend_count += 1
                    suffix = "" if suspend_count == 1 else str(suspend_count)
                    suspend = WorkflowNode(
                        node_name=sanitize_node_name(f"{prefix}-suspend{suffix}", taken),
                        node_type=NodeType.SUSPEND,
                        run_duration=Duration(grace),
                        stage=stage,
                    )
                    children.append(
                        WorkflowNode(
                            node_name=sanitize_node_name(f"{prefix}-suspend-workflow{suffix}", taken),
                            node_type=NodeType.SERIAL,
                            children=[suspend, inner],
                            stage=stage,
                        )
                    )
                else:
                    children.append(inner)
            stage_parallel = WorkflowNode(
                node_name=sanitize_node_name(f"{prefix}-overlapped-workflows", taken),
                node_type=NodeType.PARALLEL,
                children=children,
                stage=stage,
            )
        stage_nodes.append(
            WorkflowNode(
                node_name=sanitize_node_name(f"{prefix}-phase", taken),
                node_type=NodeType.SERIAL,
                children=[stage_parallel],
                stage=stage,
                stage_time=plan.stage_time(stage),
                is_stage_wrapper=True,
            )
        )
    return WorkflowNode(node_name=ENTRY_NODE_NAME, node_type=NodeType.SERIAL, children=stage_nodes)


def compute_deadlines(tree: WorkflowNode, pad: Duration = DEFAULT_TASK_PAD) -> WorkflowNode:
    """Fill deadlines bottom-up.

    Task = pad + run duration; Suspend/Failure = run duration; Serial = sum of
    children (stage wrappers add pad); Parallel = max of children.
    """

    def visit(node: WorkflowNode) -> Duration:
        if node.node_type is NodeType.TASK:
            node.deadline = pad + (node.run_duration or Duration(0))
        elif node.node_type in (NodeType.SUSPEND, NodeType.FAILURE):
            node.deadline = node.run_duration or Duration(0)
        elif node.node_type is NodeType.SERIAL:
            total = Duration(0)
            for child in node.children:
                total = total + visit(child)
            node.deadline = total + pad if node.is_stage_wrapper else total
            return node.deadline
        else:  # Parallel
            node.deadline = max(visit(child) for child in node.children)
            return node.deadline
        return node.deadline

    visit(tree)
    return tree


@dataclass(frozen=True)
class WorkflowMeta:
    name: str
    workspace: str


def _task_template(node: WorkflowNode, meta: WorkflowMeta) -> dict[str, Any]:
    vac = node.vac
    if vac is None or node.run_duration is None:
        raise DomainError(f"task node {node.node_name} has no probe to run")
    script = f"{WORKSPACE_MOUNT}/{meta.workspace}/{vac.script_path}" if meta.workspace else f"{WORKSPACE_MOUNT}/{vac.script_path}"
    argv = runner_command(vac, node.run_duration, mount_path=script)
    volume_mounts = [{"name": "pvc-volume", "mountPath": WORKSPACE_MOUNT}]
    volumes = [{"name": "pvc-volume", "persistentVolumeClaim": {"claimName": "pvc"}}]
    if vac.tool is ProbeTool.CLUSTER_API:
        container = {
            "name": f"{node.node_name}-container",
            "image": CLUSTER_API_IMAGE,
            "imagePullPolicy": "IfNotPresent",
            "command": ["/bin/bash", "-c"],
            "args": [" ".join(argv)],
            "volumeMounts": volume_mounts,
        }
    else:
        container = {
            "name": f"{node.node_name}-container",
            "image": LOAD_TEST_IMAGE,
            "command": argv,
            "volumeMounts": volume_mounts,
        }
    return {
        "name": node.node_name,
        "templateType": "Task",
        "deadline": format_duration(node.deadline or Duration(0)),
        "task": {"container": container, "volumes": volumes},
    }


def _node_template(node: WorkflowNode, meta: WorkflowMeta) -> dict[str, Any]:
    deadline = format_duration(node.deadline or Duration(0))
    if node.node_type in GROUP_TYPES:
        return {
            "name": node.node_name,
            "templateType": node.node_type.value,
            "deadline": deadline,
            "children": [child.node_name for child in node.children],
        }
    if node.node_type is NodeType.SUSPEND:
        return {"name": node.node_name, "templateType": "Suspend", "deadline": deadline}
    if node.node_type is NodeType.TASK:
        return _task_template(node, meta)
    if node.fault is None:
        raise DomainError(f"failure node {node.node_name} has no fault body")
    body_key, body = render_fault_body(node.fault)
    return {
        "name": node.node_name,
        "templateType": node.fault.kind.value,
        "deadline": deadline,
        body_key: body,
    }


def emit_workflow(tree: WorkflowNode, meta: WorkflowMeta) -> str:
    """Serialize the workflow tree into a Chaos Mesh Workflow manifest.

    Templates are ordered entry first, then per stage: the stage block's group
    and suspend nodes in tree order, then task leaves, then failure leaves.
    """
    names = [node.node_name for node in tree.walk()]
    duplicates = {n for n in names if names.count(n) > 1}
    if duplicates:
        raise DomainError(f"duplicate node names in workflow: {sorted(duplicates)}")
    if any(node.deadline is None for node in tree.walk()):
        raise DomainError("deadlines not computed; call compute_deadlines first")

    templates: list[dict[str, Any]] = [_node_template(tree, meta)]
    for stage_node in tree.children:
        group_like = [n for n in stage_node.walk() if n.node_type in GROUP_TYPES or n.node_type is NodeType.SUSPEND]
        tasks = [n for n in stage_node.walk() if n.node_type is NodeType.TASK]
        failures = [n for n in stage_node.walk() if n.node_type is NodeType.FAILURE]
        for node in group_like + tasks + failures:
            templates.append(_node_template(node, meta))

    manifest = {
        "apiVersion": WORKFLOW_API_VERSION,
        "kind": "Workflow",
        "metadata": {"name": meta.name},
        "spec": {"entry": ENTRY_NODE_NAME, "templates": templates},
    }
    return yaml.safe_dump(manifest, sort_keys=False, default_flow_style=False, width=4096)


def parse_workflow(text: str) -> WorkflowNode:
    """Rebuild the workflow tree (names, types, deadlines, children) from a manifest."""
    data = yaml.safe_load(text)
    if not isinstance(data, Mapping) or data.get("kind") != "Workflow":
        raise DomainError("not a Workflow manifest")
    spec = data.get("spec") or {}
    templates = {t["name"]: t for t in spec.get("templates", [])}
    entry = spec.get("entry")
    if entry not in templates:
        raise DomainError(f"entry template {entry!r} not found")

    def build(name: str) -> WorkflowNode:
        template = templates[name]
        template_type = template["templateType"]
        deadline = parse_duration(template["deadline"])
        if template_type in ("Serial", "Parallel"):
            children = [build(child) for child in template.get("children", [])]
            return WorkflowNode(
                node_name=name,
                node_type=NodeType(template_type),
                deadline=deadline,
                children=children,
            )
        if template_type == "Suspend":
            return WorkflowNode(
                node_name=name, node_type=NodeType.SUSPEND, deadline=deadline, run_duration=deadline
            )
        if template_type == "Task":
            task = template.get("task") or {}
            return WorkflowNode(
                node_name=name,
                node_type=NodeType.TASK,
                deadline=deadline,
                task_body=dict(task),
                run_duration=_task_run_duration(task),
            )
        body_key = BODY_KEYS.get(_kind_from_template_type(template_type))
        if body_key is None or body_key not in template:
            raise DomainError(f"template {name}: unsupported templateType {template_type!r}")
        return WorkflowNode(
            node_name=name,
            node_type=NodeType.FAILURE,
            deadline=deadline,
            run_duration=deadline,
            failure_body=(body_key, template[body_key]),
            fault=parse_fault_body(body_key, template[body_key]),
        )

    return build(entry)


def _kind_from_template_type(template_type: str):
    from .domain import FaultKind

    try:
        return FaultKind(template_type)
    except ValueError:
        return None


_DURATION_ARG_RE = re.compile(r"--duration[ \"',\[]+(\d+)(s?)")


def _task_run_duration(task: Mapping[str, Any]) -> Optional[Duration]:
    container = task.get("container") or {}
    blob = " ".join(list(container.get("command") or []) + list(container.get("args") or []))
    match = _DURATION_ARG_RE.search(blob)
    if match:
        return Duration(int(match.group(1)))
    return None


def _find_template(data: dict[str, Any], node_name: str) -> dict[str, Any]:
    for template in data["spec"]["templates"]:
        if template["name"] == node_name:
            return template
    raise DomainError(f"no workflow node named {node_name!r}")


_SCRIPT_PATH_RE = re.compile(re.escape(WORKSPACE_MOUNT) + r"/[^\s\"']+")


def _sorted_deep(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {k: _sorted_deep(value[k]) for k in sorted(value)}
    if isinstance(value, list):
        return [_sorted_deep(v) for v in value]
    return value


def patch_workflow(
    manifest: str,
    selector_updates: Mapping[str, SelectorSpec] | None = None,
    script_updates: Mapping[str, str] | None = None,
) -> str:
    """Replace fault selectors and task script paths in-place.

    ``script_updates`` values are mount-relative paths. Deadlines and every
    other field stay untouched; output is re-emitted with the canonical dumper
    so identity patches are byte-stable.
    """
    data = yaml.safe_load(manifest)
    if not isinstance(data, Mapping) or data.get("kind") != "Workflow":
        raise DomainError("not a Workflow manifest")
    data = dict(data)

    for node_name, selector in (selector_updates or {}).items():
        template = _find_template(data, node_name)
        body_key = next((k for k in BODY_KEYS.values() if k in template), None)
        if body_key is None:
            raise DomainError(f"{node_name}: not a failure node")
        body = dict(template[body_key])
        body["selector"] = selector.to_json()
        template[body_key] = _sorted_deep(body)

    for node_name, new_path in (script_updates or {}).items():
        template = _find_template(data, node_name)
        task = template.get("task")
        if not task:
            raise DomainError(f"{node_name}: not a task node")
        container = task["container"]
        full = f"{WORKSPACE_MOUNT}/{new_path}"
        if "args" in container and container.get("command") == ["/bin/bash", "-c"]:
            container["args"] = [_SCRIPT_PATH_RE.sub(full, arg, count=1) for arg in container["args"]]
        else:
            container["command"] = [
                full if token.startswith(WORKSPACE_MOUNT + "/") else token for token in container["command"]
            ]

    return yaml.safe_dump(data, sort_keys=False, default_flow_style=False, width=4096)


def normalize_workflow(text: str) -> dict[str, Any]:
    """Key-order-insensitive structural form of a workflow manifest."""

    def norm(value: Any) -> Any:
        if isinstance(value, Mapping):
            return {k: norm(value[k]) for k in sorted(value)}
        if isinstance(value, list):
            return [norm(v) for v in value]
        return value

    data = yaml.safe_load(text)
    spec = dict(data.get("spec") or {})
    templates = {t["name"]: norm({k: v for k, v in t.items() if k != "name"}) for t in spec.get("templates", [])}
    return {
        "apiVersion": data.get("apiVersion"),
        "kind": data.get("kind"),
        "metadata": norm(data.get("metadata") or {}),
        "entry": spec.get("entry"),
        "templates": templates,
    }


def structural_diff(left: str, right: str) -> list[str]:
    """Human-readable structural differences between two manifests."""
    a = normalize_workflow(left)
    b = normalize_workflow(right)
    diffs: list[str] = []
    for key in ("apiVersion", "kind", "metadata", "entry"):
        if a[key] != b[key]:
            diffs.append(f"{key}: {a[key]!r} != {b[key]!r}")
    names_a, names_b = set(a["templates"]), set(b["templates"])
    for missing in sorted(names_a - names_b):
        diffs.append(f"template only in left: {missing}")
    for missing in sorted(names_b - names_a):
        diffs.append(f"template only in right: {missing}")
    for name in sorted(names_a & names_b):
        ta, tb = a["templates"][name], b["templates"][name]
        if ta == tb:
            continue
        for field_name in sorted(set(ta) | set(tb)):
            if ta.get(field_name) != tb.get(field_name):
                diffs.append(f"{name}.{field_name}: {ta.get(field_name)!r} != {tb.get(field_name)!r}")
    return diffs


def retarget_plan(plan: ExperimentPlan, vac_updates: Mapping[str, VaCSpec]) -> ExperimentPlan:
    """Swap VaC payloads by steady-state name, leaving all timings untouched."""
    new_stages = {
        stage: tuple(
            replace(item, payload=vac_updates[item.name])
            if not item.is_fault and item.name in vac_updates
            else item
            for item in plan.stages[stage]
        )
        for stage in STAGE_ORDER
    }
    return replace(plan, stages=new_stages)
