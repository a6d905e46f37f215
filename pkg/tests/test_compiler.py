from __future__ import annotations

import random

import pytest

from chaoscycle.compiler import (
    ExperimentPlan,
    NodeType,
    STAGE_ORDER,
    ScheduleItem,
    Stage,
    WorkflowMeta,
    compute_deadlines,
    emit_workflow,
    group_nodes,
    normalize_workflow,
    parse_workflow,
    patch_workflow,
    structural_diff,
    validate_plan,
)
from chaoscycle.domain import (
    Comparator,
    DomainError,
    Duration,
    Fault,
    FaultKind,
    Metric,
    ProbeTarget,
    ProbeTool,
    SelectorSpec,
    ThresholdSpec,
    VaCSpec,
)
from chaoscycle.simulator import build_cluster, simulate, timeline_check
from chaoscycle.manifests import load_project

from conftest import (
    NGINX_WORKFLOW_NAME,
    NGINX_WORKSPACE,
    nginx_golden_plan,
    sockshop_golden_plan,
)


def _vac(name: str) -> VaCSpec:
    return VaCSpec(
        tool=ProbeTool.CLUSTER_API,
        target=ProbeTarget(namespace="default", kind="Pod", name=name),
        script_path=f"hypothesis/unittest_{name}_mod0.py",
    )


def _fault(kind: FaultKind = FaultKind.POD_CHAOS, name_id: int = 0) -> Fault:
    return Fault(
        kind=kind,
        name_id=name_id,
        params={"action": "pod-kill", "mode": "one"} if kind is FaultKind.POD_CHAOS else {"mode": "all", "timeOffset": "-1m"},
        scope=SelectorSpec(namespaces=("default",), label_selectors={"app": "x"}),
    )


def _item(name: str, grace: int, duration: int, fault: Fault | None = None) -> ScheduleItem:
    if fault is not None:
        return ScheduleItem(
            name=fault.kind.value,
            is_fault=True,
            grace_period=Duration(grace),
            duration=Duration(duration),
            payload=fault,
        )
    return ScheduleItem(
        name=name, is_fault=False, grace_period=Duration(grace), duration=Duration(duration), payload=_vac(name)
    )


def _plan(pre=(), fault=(), post=(), pre_t=15, fault_t=30, post_t=15) -> ExperimentPlan:
    return ExperimentPlan(
        total_time=Duration(pre_t + fault_t + post_t),
        pre_time=Duration(pre_t),
        fault_time=Duration(fault_t),
        post_time=Duration(post_t),
        stages={Stage.PRE: tuple(pre), Stage.FAULT: tuple(fault), Stage.POST: tuple(post)},
    )


class TestValidatePlan:
    def test_nginx_plan_ok(self):
        assert validate_plan(nginx_golden_plan()) == []

    def test_item_exceeding_stage_time(self):
        plan = _plan(pre=[_item("a", 10, 10)], pre_t=15)
        violations = validate_plan(plan)
        assert any("exceeds stage time" in str(v) for v in violations)

    def test_stage_sum_identity(self):
        plan = ExperimentPlan(
            total_time=Duration(61),
            pre_time=Duration(15),
            fault_time=Duration(30),
            post_time=Duration(15),
            stages={},
        )
        violations = validate_plan(plan)
        assert any("stage sum" in str(v) for v in violations)

    def test_empty_stage_rejected(self):
        plan = _plan(pre=[_item("a", 0, 5)], fault=[_item("", 0, 5, fault=_fault())], post=[])
        violations = validate_plan(plan)
        assert any("no schedule items" in str(v) for v in violations)

    def test_fault_outside_fault_stage(self):
        plan = _plan(pre=[_item("x", 0, 5, fault=_fault())])
        violations = validate_plan(plan)
        assert any("outside failure-injection" in str(v) for v in violations)


class TestGroupNodes:
    def test_nginx_pre_stage_shape(self):
        tree = group_nodes(nginx_golden_plan())
        pre = tree.children[0]
        assert pre.node_name == "pre-validation-phase"
        assert pre.node_type is NodeType.SERIAL and pre.is_stage_wrapper
        parallel = pre.children[0]
        assert parallel.node_name == "pre-validation-overlapped-workflows"
        first, second = parallel.children
        assert first.node_name == "pre-unittest-example-pod-running"
        assert first.node_type is NodeType.TASK
        assert second.node_name == "pre-validation-suspend-workflow"
        assert [c.node_type for c in second.children] == [NodeType.SUSPEND, NodeType.TASK]
        assert second.children[0].run_duration == Duration(5)

    def test_single_item_grace_zero_unwrapped(self):
        plan = _plan(
            pre=[_item("solo", 0, 5)],
            fault=[_item("", 0, 5, fault=_fault())],
            post=[_item("solo", 0, 5)],
        )
        tree = group_nodes(plan)
        pre = tree.children[0]
        parallel = pre.children[0]
        assert parallel.node_name == "pre-validation-parallel-workflows"
        assert len(parallel.children) == 1
        assert parallel.children[0].node_type is NodeType.TASK

    def test_fault_stage_grace_pairs(self):
        tree = group_nodes(nginx_golden_plan())
        fault_stage = tree.children[1]
        overlapped = fault_stage.children[0]
        assert overlapped.node_name == "fault-injection-overlapped-workflows"
        pair0, suspended = overlapped.children
        assert pair0.node_name == "fault-injection-parallel-workflow"
        assert {c.node_name for c in pair0.children} == {
            "fault-unittest-example-pod-running",
            "fault-podchaos",
        }
        assert suspended.node_name == "fault-injection-suspend-workflow"
        suspend, pair1 = suspended.children
        assert suspend.node_name == "fault-injection-suspend"
        assert suspend.run_duration == Duration(10)
        assert pair1.node_name == "fault-injection-parallel-workflows"
        assert {c.node_name for c in pair1.children} == {
            "fault-unittest-example-service-availability",
            "fault-networkchaos",
        }

    def test_leaf_count_equals_item_count(self):
        plan = nginx_golden_plan()
        tree = group_nodes(plan)
        assert len(tree.leaves()) - sum(
            1 for n in tree.walk() if n.node_type is NodeType.SUSPEND
        ) == len(plan.items())

    def test_repeated_fault_kind_gets_numbered_names(self):
        f0 = _fault(name_id=0)
        f1 = _fault(name_id=1)
        plan = _plan(
            pre=[_item("a", 0, 5)],
            fault=[_item("", 0, 5, fault=f0), _item("", 5, 5, fault=f1)],
            post=[_item("a", 0, 5)],
        )
        tree = group_nodes(plan)
        names = {leaf.node_name for leaf in tree.leaves() if leaf.node_type is NodeType.FAILURE}
        assert names == {"fault-podchaos-1", "fault-podchaos-2"}

    def test_invalid_plan_rejected(self):
        plan = _plan(pre=[_item("a", 20, 20)], pre_t=15)
        with pytest.raises(DomainError):
            group_nodes(plan)


class TestComputeDeadlines:
    def test_task_pad(self):
        plan = _plan(pre=[_item("a", 0, 5)], fault=[_item("", 0, 5, fault=_fault())], post=[_item("a", 0, 5)])
        tree = compute_deadlines(group_nodes(plan))
        task = next(n for n in tree.walk() if n.node_name == "pre-unittest-a")
        assert str(task.deadline) == "5m5s"

    def test_nginx_reference_values(self):
        tree = compute_deadlines(group_nodes(nginx_golden_plan()))
        by_name = {n.node_name: str(n.deadline) for n in tree.walk()}
        assert by_name["pre-validation-suspend-workflow"] == "5m10s"
        assert by_name["pre-validation-phase"] == "10m10s"
        assert by_name["fault-injection-phase"] == "10m30s"
        assert by_name["post-validation-phase"] == "10m11s"
        assert by_name["the-entry"] == "30m51s"

    def test_deadline_monotonicity_and_entry_bound(self):
        plan = sockshop_golden_plan()
        tree = compute_deadlines(group_nodes(plan))
        for node in tree.walk():
            if node.children:
                assert node.deadline.seconds >= max(c.deadline.seconds for c in node.children)
        assert tree.deadline.seconds >= plan.total_time.seconds


class TestEmitParseRoundTrip:
    def test_round_trip_preserves_structure(self):
        tree = compute_deadlines(group_nodes(nginx_golden_plan()))
        manifest = emit_workflow(tree, WorkflowMeta(name=NGINX_WORKFLOW_NAME, workspace=NGINX_WORKSPACE))
        recovered = parse_workflow(manifest)

        def shape(node):
            return (
                node.node_name,
                node.node_type.value if node.node_type is not NodeType.FAILURE else "Failure",
                str(node.deadline),
                tuple(shape(c) for c in node.children),
            )

        assert shape(recovered) == shape(tree)

    def test_reemission_is_byte_stable(self):
        tree = compute_deadlines(group_nodes(nginx_golden_plan()))
        manifest = emit_workflow(tree, WorkflowMeta(name=NGINX_WORKFLOW_NAME, workspace=NGINX_WORKSPACE))
        assert patch_workflow(manifest) == patch_workflow(patch_workflow(manifest))


class TestPatchWorkflow:
    def _manifest(self) -> str:
        tree = compute_deadlines(group_nodes(nginx_golden_plan()))
        return emit_workflow(tree, WorkflowMeta(name=NGINX_WORKFLOW_NAME, workspace=NGINX_WORKSPACE))

    def test_script_retarget_touches_only_named_tasks(self):
        manifest = self._manifest()
        new_path = f"{NGINX_WORKSPACE}/unittest_example-pod-running_mod1.py"
        patched = patch_workflow(
            manifest,
            script_updates={
                "pre-unittest-example-pod-running": new_path,
                "fault-unittest-example-pod-running": new_path,
                "post-unittest-example-pod-running": new_path,
            },
        )
        diffs = structural_diff(manifest, patched)
        assert diffs, "patch must change something"
        touched = {d.split(".")[0] for d in diffs}
        assert touched == {
            "pre-unittest-example-pod-running",
            "fault-unittest-example-pod-running",
            "post-unittest-example-pod-running",
        }
        normalized = normalize_workflow(patched)
        args = normalized["templates"]["pre-unittest-example-pod-running"]["task"]["container"]["args"]
        assert args == [f"python /chaos-eater/{new_path} --duration 5"]
        # durations and deadlines untouched
        assert normalized["templates"]["pre-unittest-example-pod-running"]["deadline"] == "5m5s"

    def test_identity_patch_is_stable(self):
        manifest = self._manifest()
        assert patch_workflow(manifest, {}, {}) == patch_workflow(manifest)
        assert structural_diff(manifest, patch_workflow(manifest)) == []

    def test_selector_same_value_is_identity(self):
        manifest = self._manifest()
        same = SelectorSpec(namespaces=("default",), label_selectors={"app": "example"})
        patched = patch_workflow(manifest, selector_updates={"fault-podchaos": same})
        assert structural_diff(manifest, patched) == []

    def test_selector_change_confined_to_named_node(self):
        manifest = self._manifest()
        new_scope = SelectorSpec(namespaces=("default",), label_selectors={"app": "other"})
        patched = patch_workflow(manifest, selector_updates={"fault-podchaos": new_scope})
        diffs = structural_diff(manifest, patched)
        assert {d.split(".")[0] for d in diffs} == {"fault-podchaos"}

    def test_unknown_node_rejected(self):
        manifest = self._manifest()
        with pytest.raises(DomainError, match="no workflow node"):
            patch_workflow(manifest, script_updates={"nope": "x.py"})


# -- randomized Algorithm-1 property suite -------------------------------------


def _random_plan(rng: random.Random) -> ExperimentPlan:
    def stage_items(stage: Stage, stage_time: int) -> list[ScheduleItem]:
        items = []
        n = rng.randint(1, 4)
        fault_kinds = [FaultKind.POD_CHAOS, FaultKind.TIME_CHAOS]
        for i in range(n):
            duration = rng.randint(1, max(1, stage_time - 1))
            grace = rng.choice([0, 0, rng.randint(0, stage_time - duration)])
            grace = min(grace, stage_time - duration)
            if stage is Stage.FAULT and rng.random() < 0.5:
                kind = rng.choice(fault_kinds)
                fault = Fault(
                    kind=kind,
                    name_id=i,
                    params={"action": "pod-kill", "mode": "one"}
                    if kind is FaultKind.POD_CHAOS
                    else {"timeOffset": "-1m", "mode": "all"},
                    scope=SelectorSpec(namespaces=("default",), label_selectors={"app": "x"}),
                )
                items.append(
                    ScheduleItem(
                        name=kind.value,
                        is_fault=True,
                        grace_period=Duration(grace),
                        duration=Duration(duration),
                        payload=fault,
                    )
                )
            else:
                name = f"{stage.value.split('-')[0]}-state-{i}"
                items.append(
                    ScheduleItem(
                        name=name,
                        is_fault=False,
                        grace_period=Duration(grace),
                        duration=Duration(duration),
                        payload=_vac(name),
                    )
                )
        return items

    pre_t, fault_t, post_t = (rng.randint(5, 40) for _ in range(3))
    return ExperimentPlan(
        total_time=Duration(pre_t + fault_t + post_t),
        pre_time=Duration(pre_t),
        fault_time=Duration(fault_t),
        post_time=Duration(post_t),
        stages={
            Stage.PRE: tuple(stage_items(Stage.PRE, pre_t)),
            Stage.FAULT: tuple(stage_items(Stage.FAULT, fault_t)),
            Stage.POST: tuple(stage_items(Stage.POST, post_t)),
        },
    )


def _suspend_chain_before(tree, leaf_name: str) -> int:
    """Total suspend seconds preceding the leaf inside its serial chains."""

    def search(node, acc):
        if node.node_name == leaf_name:
            return acc
        if node.node_type is NodeType.SERIAL:
            running = acc
            for child in node.children:
                found = search(child, running)
                if found is not None:
                    return found
                if child.node_type is NodeType.SUSPEND:
                    running += child.run_duration.seconds
            return None
        for child in node.children:
            found = search(child, acc)
            if found is not None:
                return found
        return None

    return search(tree, 0)


def _check_plan_properties(plan: ExperimentPlan, cluster_snapshot) -> None:
    tree = compute_deadlines(group_nodes(plan))
    leaves = [n for n in tree.leaves() if n.node_type is not NodeType.SUSPEND]
    items = plan.items()
    # every item maps to exactly one leaf
    assert len(leaves) == len(items)
    # three stage parallels serially ordered under the entry
    assert tree.node_type is NodeType.SERIAL
    assert [child.stage for child in tree.children] == list(STAGE_ORDER)
    for stage_node in tree.children:
        assert stage_node.node_type is NodeType.SERIAL
        assert len(stage_node.children) == 1
        assert stage_node.children[0].node_type is NodeType.PARALLEL

    # grace encoding: zero-grace leaves have no suspends before them; positive
    # graces are encoded as one suspend of exactly that length
    by_stage: dict[Stage, list] = {s: [] for s in STAGE_ORDER}
    for stage, item in items:
        by_stage[stage].append(item)
    for stage_node in tree.children:
        stage_items = by_stage[stage_node.stage]
        stage_leaves = [n for n in stage_node.leaves() if n.node_type is not NodeType.SUSPEND]
        assert len(stage_leaves) == len(stage_items)
        for leaf in stage_leaves:
            suspended = _suspend_chain_before(stage_node, leaf.node_name)
            matching = [
                item
                for item in stage_items
                if item.duration == leaf.run_duration and item.grace_period.seconds == suspended
            ]
            assert matching, f"{leaf.node_name}: no schedule item with grace {suspended}"

    # timeline oracle: simulated start == stage offset + grace for every leaf
    cluster = build_cluster(cluster_snapshot)
    thresholds = {
        item.name: ThresholdSpec(metric=Metric.RUNNING_RATIO, comparator=Comparator.GE, value=0.0)
        for stage, item in items
        if not item.is_fault
    }
    timeline, _ = simulate(
        tree,
        cluster,
        thresholds,
        seed=0,
        stage_times=[plan.pre_time, plan.fault_time, plan.post_time],
    )
    assert timeline_check(timeline, plan) == []


def test_algorithm_properties_randomized(nginx_project):
    snapshot = load_project(nginx_project)
    rng = random.Random(20240917)
    for _ in range(1000):
        plan = _random_plan(rng)
        _check_plan_properties(plan, snapshot)


def test_timeline_offsets_nginx_fixture(nginx_project):
    plan = nginx_golden_plan()
    tree = compute_deadlines(group_nodes(plan))
    cluster = build_cluster(load_project(nginx_project))
    from conftest import NGINX_THRESHOLDS

    timeline, _ = simulate(
        tree,
        cluster,
        NGINX_THRESHOLDS,
        seed=0,
        stage_times=[plan.pre_time, plan.fault_time, plan.post_time],
    )
    assert timeline.window("pre-unittest-example-service-availability") == (5, 10)
    # stage offset 15 plus grace 10
    assert timeline.window("fault-networkchaos") == (25, 45)
    assert timeline_check(timeline, plan) == []
