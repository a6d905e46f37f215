from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from chaoscycle.domain import (
    Comparator,
    DomainError,
    Duration,
    DurationParseError,
    ExperimentResult,
    FailureScenario,
    Fault,
    FaultKind,
    Hypothesis,
    Metric,
    ProbeTarget,
    ProbeTool,
    SelectorSpec,
    SteadyState,
    ThresholdSpec,
    VaCOutcome,
    VaCSpec,
    format_duration,
    hypothesis_satisfied,
    parse_duration,
)


class TestDuration:
    def test_parse_compound(self):
        assert parse_duration("5m10s").seconds == 310

    def test_parse_zero(self):
        assert parse_duration("0s").seconds == 0
        assert format_duration(Duration(0)) == "0s"

    def test_format_drops_zero_components(self):
        assert format_duration(Duration(1851)) == "30m51s"
        assert format_duration(Duration(3600)) == "1h"
        assert format_duration(Duration(3661)) == "1h1m1s"

    def test_parse_rejects_garbage(self):
        for bad in ("", "10", "m5", "5x", "5s5m", "1h2h"):
            with pytest.raises(DurationParseError):
                parse_duration(bad)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            Duration(-1)

    def test_addition_and_max(self):
        assert (Duration(5) + Duration(10)).seconds == 15
        assert max(Duration(5), Duration(10)) == Duration(10)

    @given(st.integers(min_value=0, max_value=24 * 3600))
    def test_round_trip_up_to_a_day(self, seconds):
        assert parse_duration(format_duration(Duration(seconds))).seconds == seconds

    @given(st.integers(min_value=0, max_value=10**6), st.integers(min_value=0, max_value=10**6))
    def test_addition_closed(self, a, b):
        assert (Duration(a) + Duration(b)).seconds == a + b


def _vac(name="probe", tool=ProbeTool.CLUSTER_API):
    if tool is ProbeTool.LOAD_TEST:
        target = ProbeTarget(url="http://svc.default.svc.cluster.local:80")
    else:
        target = ProbeTarget(namespace="default", kind="Pod", name="example-pod")
    return VaCSpec(tool=tool, target=target, script_path=f"hypothesis/{name}.py")


def _state(name="example-pod-running", baseline=1.0):
    return SteadyState(
        name=name,
        description="pod stays up",
        threshold=ThresholdSpec(metric=Metric.RUNNING_RATIO, comparator=Comparator.GE, value=0.9),
        vac=_vac(name),
        baseline=baseline,
    )


def _scenario():
    fault = Fault(
        kind=FaultKind.POD_CHAOS,
        name_id=0,
        params={"action": "pod-kill", "mode": "one"},
        scope=SelectorSpec(namespaces=("default",), label_selectors={"app": "example"}),
    )
    return FailureScenario(event="attack", description="", sequence=((fault,),))


class TestThresholdSpec:
    def test_ratio_bounds(self):
        with pytest.raises(DomainError):
            ThresholdSpec(metric=Metric.RUNNING_RATIO, comparator=Comparator.GE, value=1.5)

    def test_count_requires_integer(self):
        with pytest.raises(DomainError):
            ThresholdSpec(metric=Metric.READY_REPLICAS_MIN, comparator=Comparator.GE, value=1.5)

    def test_comparators(self):
        ge = ThresholdSpec(metric=Metric.RUNNING_RATIO, comparator=Comparator.GE, value=0.9)
        assert ge.satisfied_by(0.9) and not ge.satisfied_by(0.89)
        le = ThresholdSpec(metric=Metric.REQUEST_FAILURE_RATE, comparator=Comparator.LE, value=0.001)
        assert le.satisfied_by(0.001) and not le.satisfied_by(0.002)

    def test_json_round_trip(self):
        spec = ThresholdSpec(metric=Metric.READY_REPLICAS_MIN, comparator=Comparator.GE, value=1)
        assert ThresholdSpec.from_json(spec.to_json()) == spec


class TestVaCSpec:
    def test_load_test_requires_internal_dns(self):
        with pytest.raises(DomainError):
            VaCSpec(
                tool=ProbeTool.LOAD_TEST,
                target=ProbeTarget(url="http://example.com"),
                script_path="x.js",
            )

    def test_cluster_api_requires_kind(self):
        with pytest.raises(DomainError):
            VaCSpec(tool=ProbeTool.CLUSTER_API, target=ProbeTarget(), script_path="x.py")


class TestSelectorSpec:
    def test_needs_a_dimension(self):
        with pytest.raises(DomainError):
            SelectorSpec()

    def test_json_round_trip(self):
        spec = SelectorSpec(namespaces=("default",), label_selectors={"app": "example"})
        assert SelectorSpec.from_json(spec.to_json()) == spec


class TestHypothesis:
    def test_requires_unique_names(self):
        with pytest.raises(DomainError):
            Hypothesis(steady_states=(_state(), _state()), scenario=_scenario())

    def test_requires_passing_baseline(self):
        with pytest.raises(DomainError):
            Hypothesis(steady_states=(_state(baseline=0.5),), scenario=_scenario())

    def test_baseline_none_rejected(self):
        with pytest.raises(DomainError):
            Hypothesis(steady_states=(_state(baseline=None),), scenario=_scenario())

    def test_json_round_trip(self):
        hypothesis = Hypothesis(steady_states=(_state(),), scenario=_scenario())
        assert Hypothesis.from_json(hypothesis.to_json()).to_json() == hypothesis.to_json()

    def test_scenario_rejects_duplicate_fault_identity(self):
        fault = Fault(
            kind=FaultKind.POD_CHAOS,
            name_id=0,
            params={"action": "pod-kill", "mode": "one"},
            scope=SelectorSpec(namespaces=("default",)),
        )
        with pytest.raises(DomainError):
            FailureScenario(event="e", description="", sequence=((fault,), (fault,)))


def _outcome(name, passed):
    return VaCOutcome(name=name, passed=passed, log="", measured=1.0 if passed else 0.0)


NGINX_RUNS = (
    "pre-unittest-example-pod-running",
    "pre-unittest-example-service-availability",
    "fault-unittest-example-pod-running",
    "fault-unittest-example-service-availability",
    "post-unittest-example-pod-running",
    "post-unittest-example-service-availability",
)


class TestHypothesisSatisfied:
    def test_all_six_pass(self):
        result = ExperimentResult(
            scheduled=NGINX_RUNS,
            outcomes={name: _outcome(name, True) for name in NGINX_RUNS},
        )
        assert hypothesis_satisfied(result) is True

    def test_single_failure_fails(self):
        outcomes = {name: _outcome(name, True) for name in NGINX_RUNS}
        outcomes["fault-unittest-example-pod-running"] = _outcome(
            "fault-unittest-example-pod-running", False
        )
        result = ExperimentResult(scheduled=NGINX_RUNS, outcomes=outcomes)
        assert hypothesis_satisfied(result) is False

    def test_vacuous_truth_on_empty(self):
        assert hypothesis_satisfied(ExperimentResult(scheduled=(), outcomes={})) is True

    def test_missing_outcome_is_contract_violation(self):
        result = ExperimentResult(scheduled=("a",), outcomes={})
        with pytest.raises(DomainError):
            hypothesis_satisfied(result)

    @given(st.lists(st.booleans(), min_size=1, max_size=12))
    def test_monotone_under_adding_passes(self, passes):
        names = [f"run-{i}" for i in range(len(passes))]
        result = ExperimentResult(
            scheduled=tuple(names),
            outcomes={n: _outcome(n, p) for n, p in zip(names, passes)},
        )
        extended = ExperimentResult(
            scheduled=tuple(names) + ("extra",),
            outcomes={**{n: _outcome(n, p) for n, p in zip(names, passes)}, "extra": _outcome("extra", True)},
        )
        if hypothesis_satisfied(result):
            assert hypothesis_satisfied(extended)
        shrunk = ExperimentResult(
            scheduled=tuple(names) + ("extra",),
            outcomes={**{n: _outcome(n, p) for n, p in zip(names, passes)}, "extra": _outcome("extra", False)},
        )
        assert not hypothesis_satisfied(shrunk)
