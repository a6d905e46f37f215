"""Runner commands, probe-script rendering, and threshold evaluation for
validation-as-code probes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .domain import (
    DomainError,
    Duration,
    Metric,
    ProbeTool,
    RATIO_METRICS,
    ThresholdSpec,
    VaCOutcome,
    VaCSpec,
    format_duration,
)

CLUSTER_API_IMAGE = "chaos-eater/k8sapi:1.0"
LOAD_TEST_IMAGE = "grafana/k6:latest"
WORKSPACE_MOUNT = "/chaos-eater"


@dataclass(frozen=True)
class SampleTrace:
    """Per-second metric samples for one VaC run."""

    steady_state_name: str
    samples: tuple[tuple[int, float], ...]
    duration: Duration

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple((int(t), float(v)) for t, v in self.samples))
        times = [t for t, _ in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError("sample timestamps must be strictly increasing")

    @property
    def values(self) -> list[float]:
        return [v for _, v in self.samples]


def runner_command(vac: VaCSpec, duration: Duration, mount_path: str = "") -> list[str]:
    """Argument vector that runs the probe for ``duration`` seconds.

    ``mount_path`` is the absolute location of the script on the shared
    volume; defaults to the script path under the workspace mount.
    """
    if duration.seconds < 1:
        raise DomainError(f"runner duration must be >= 1s, got {format_duration(duration)}")
    if not vac.script_path:
        raise DomainError("vac script_path not set")
    script = mount_path or f"{WORKSPACE_MOUNT}/{vac.script_path}"
    if vac.tool is ProbeTool.CLUSTER_API:
        return ["python", script, "--duration", str(duration.seconds)]
    if vac.tool is ProbeTool.LOAD_TEST:
        return ["k6", "run", "--duration", f"{duration.seconds}s", "--quiet", script]
    raise DomainError(f"unknown probe tool {vac.tool!r}")


_CLUSTER_API_RATIO_TEMPLATE = '''\
import argparse
import time

from kubernetes import client
from unittest_base import K8sAPIBase


class SteadyStateTest(K8sAPIBase):
    """Checks that {target_desc} stays up for the threshold share of samples."""

    def probe(self):
        try:
            {probe_body}
        except client.exceptions.ApiException as e:
            print(f"Exception while probing: {{e}}")
            return False

    def run(self, duration):
        ok_count = 0
        for _ in range(duration):
            if self.probe():
                ok_count += 1
            time.sleep(1)
        running_percentage = (ok_count / duration) * 100
        print(f"{target_desc} was up {{ok_count}} out of {{duration}} seconds, which is {{running_percentage:.2f}}%")
        assert running_percentage >= {percent}, (
            f"running percentage {{running_percentage:.2f}}% is below {percent}%"
        )


def main():
    parser = argparse.ArgumentParser(description="Steady-state check for {target_desc}")
    parser.add_argument("--duration", type=int, default=5)
    args = parser.parse_args()
    SteadyStateTest().run(args.duration)


if __name__ == "__main__":
    main()
'''

_CLUSTER_API_READY_TEMPLATE = '''\
import argparse
import time

from kubernetes import client
from unittest_base import K8sAPIBase


class SteadyStateTest(K8sAPIBase):
    """Checks that deployment {name} keeps at least {min_ready} ready replica(s)."""

    def __init__(self):
        super().__init__()
        self.apps_v1 = client.AppsV1Api()

    def run(self, duration):
        ready_count = 0
        for _ in range(duration):
            status = self.apps_v1.read_namespaced_deployment_status("{name}", "{namespace}")
            ready = status.status.ready_replicas or 0
            print(f"Ready replicas for {name}: {{ready}}")
            if ready >= {min_ready}:
                ready_count += 1
            time.sleep(1)
        readiness_percentage = (ready_count / duration) * 100
        print(f"{name} was ready {{ready_count}}/{{duration}} times.")
        assert readiness_percentage == 100, (
            f"{name} readiness was {{readiness_percentage:.2f}}%, expected 100%"
        )


def main():
    parser = argparse.ArgumentParser(description="Ready-replica check for {name}")
    parser.add_argument("--duration", type=int, default=5)
    args = parser.parse_args()
    SteadyStateTest().run(args.duration)


if __name__ == "__main__":
    main()
'''

_LOAD_TEST_TEMPLATE = """\
import http from 'k6/http';
import {{ check }} from 'k6';

export const options = {{
  vus: {vus},
  duration: '{duration}',
  thresholds: {{
    'http_req_failed': ['rate<={rate}'],
  }},
}};

export default function () {{
  const res = http.get('{url}');
  check(res, {{
    'status is 200': (r) => r.status === 200,
  }});
}}
"""


def render_probe_script(vac: VaCSpec, threshold: ThresholdSpec, vus: int = 1) -> str:
    """Deterministic probe-script text for the given threshold.

    Cluster-api scripts sample once per second for ``--duration`` and assert
    the ratio/count threshold; load-test scripts set vus/duration options and
    a request-failure-rate threshold option.
    """
    metric = threshold.metric
    if vac.tool is ProbeTool.LOAD_TEST:
        if metric is not Metric.REQUEST_FAILURE_RATE:
            raise DomainError(f"load-test probes support request-failure-rate only, got {metric.value}")
        # The options duration is a default; the runner overrides it per stage
        # with --duration.
        return _LOAD_TEST_TEMPLATE.format(
            vus=vus,
            duration="5s",
            rate=_format_number(threshold.value),
            url=vac.target.url,
        )
    if metric is Metric.REQUEST_FAILURE_RATE:
        raise DomainError("request-failure-rate needs the load-test tool")
    target = vac.target
    if metric is Metric.READY_REPLICAS_MIN:
        return _CLUSTER_API_READY_TEMPLATE.format(
            name=target.name,
            namespace=target.namespace,
            min_ready=int(threshold.value),
        )
    percent = _format_number(threshold.value * 100)
    if target.name:
        desc = f"{target.kind.lower()} {target.name}"
        probe_body = (
            f'pod = self.v1.read_namespaced_pod(name="{target.name}", namespace="{target.namespace}")\n'
            "            return pod.status.phase == 'Running'"
        )
        if target.kind.lower() == "deployment":
            probe_body = (
                f'status = client.AppsV1Api().read_namespaced_deployment_status("{target.name}", "{target.namespace}")\n'
                "            return (status.status.ready_replicas or 0) >= 1"
            )
    else:
        selector = ",".join(f"{k}={v}" for k, v in sorted(target.label_selectors.items()))
        desc = f"pods selected by {selector}"
        probe_body = (
            f'pods = self.v1.list_namespaced_pod(namespace="{target.namespace}", label_selector="{selector}").items\n'
            "            return any(pod.status.phase == 'Running' for pod in pods)"
        )
    script = _CLUSTER_API_RATIO_TEMPLATE.format(
        target_desc=desc,
        probe_body=probe_body,
        percent=percent,
    )
    return script


def _format_number(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(value)


def evaluate_threshold(threshold: ThresholdSpec, trace: SampleTrace) -> VaCOutcome:
    """Apply the threshold to a sampled trace.

    Ratio metrics aggregate as mean over samples; ready-replicas-min takes the
    minimum observed count. The comparator is applied exactly; the log records
    per-sample values and the aggregate.
    """
    if not trace.samples:
        raise DomainError(f"{trace.steady_state_name}: empty trace")
    values = trace.values
    n = len(values)
    lines = [f"t={t} value={_format_number(v)}" for t, v in trace.samples]
    if threshold.metric in RATIO_METRICS:
        measured = sum(values) / n
        if threshold.metric is Metric.REQUEST_FAILURE_RATE:
            failed = sum(1 for v in values if v > 0)
            lines.append(f"{failed} out of {n} requests failed, rate {measured:.4f}")
        else:
            ok = sum(1 for v in values if v >= 1.0)
            lines.append(f"up {ok} out of {n} seconds, which is {measured * 100:.2f}%")
    else:
        measured = min(values)
        satisfied = sum(1 for v in values if threshold.satisfied_by(v))
        lines.append(f"ready {satisfied}/{n} times; minimum observed {_format_number(measured)}")
    passed = threshold.satisfied_by(measured)
    lines.append(
        f"threshold {threshold.metric.value} {threshold.comparator.value} "
        f"{_format_number(threshold.value)}: {'pass' if passed else 'fail'}"
    )
    return VaCOutcome(
        name=trace.steady_state_name,
        passed=passed,
        log="\n".join(lines),
        measured=measured,
    )


def trace_from_values(name: str, values: Sequence[float], start: int = 0) -> SampleTrace:
    """Build a per-second trace from raw values (test and simulator helper)."""
    samples = tuple((start + i, float(v)) for i, v in enumerate(values))
    return SampleTrace(steady_state_name=name, samples=samples, duration=Duration(len(samples)))
