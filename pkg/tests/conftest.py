from __future__ import annotations

from pathlib import Path

import pytest

from chaoscycle.compiler import ExperimentPlan, ScheduleItem, Stage
from chaoscycle.domain import (
    Comparator,
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

DATA_DIR = Path(__file__).parent / "data"

NGINX_POD_YAML = """\
apiVersion: v1
kind: Pod
metadata:
  name: example-pod
  labels:
    app: example
spec:
  restartPolicy: Never
  containers:
  - name: example-container
    image: nginx:1.17.1
    ports:
    - containerPort: 80
"""

NGINX_SERVICE_YAML = """\
apiVersion: v1
kind: Service
metadata:
  name: example-service
spec:
  selector:
    app: example
  ports:
    - protocol: TCP
      port: 80
      targetPort: 80
"""

NGINX_SKAFFOLD_YAML = """\
apiVersion: skaffold/v3
kind: Config
metadata:
  name: nginx-app
manifests:
  rawYaml:
    - pod.yaml
    - service.yaml
"""

RESILIENT_NGINX_DEPLOYMENT_YAML = """\
apiVersion: apps/v1
kind: Deployment
metadata:
  name: example-deployment
  labels:
    app: example
spec:
  replicas: 3
  selector:
    matchLabels:
      app: example
  template:
    metadata:
      labels:
        app: example
    spec:
      containers:
      - name: example-container
        image: nginx:1.17.1
        resources:
          requests:
            cpu: 100m
            memory: 100Mi
        ports:
        - containerPort: 80
"""


def write_nginx_project(root: Path, resilient: bool = False) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    (root / "skaffold.yaml").write_text(NGINX_SKAFFOLD_YAML, encoding="utf-8")
    (root / "pod.yaml").write_text(
        RESILIENT_NGINX_DEPLOYMENT_YAML if resilient else NGINX_POD_YAML, encoding="utf-8"
    )
    (root / "service.yaml").write_text(NGINX_SERVICE_YAML, encoding="utf-8")
    return root


@pytest.fixture
def nginx_project(tmp_path: Path) -> Path:
    return write_nginx_project(tmp_path / "nginx")


@pytest.fixture
def resilient_nginx_project(tmp_path: Path) -> Path:
    return write_nginx_project(tmp_path / "nginx-resilient", resilient=True)


SOCKSHOP_SKAFFOLD_YAML = """\
apiVersion: skaffold/v3
kind: Config
metadata:
  name: sock-shop
manifests:
  rawYaml:
    - manifests/00-namespace.yaml
    - manifests/03-carts-db-dep.yaml
    - manifests/04-carts-db-svc.yaml
    - manifests/09-front-end-dep.yaml
    - manifests/10-front-end-svc.yaml
"""

SOCKSHOP_NAMESPACE_YAML = """\
apiVersion: v1
kind: Namespace
metadata:
  name: sock-shop
"""

CARTS_DB_DEP_YAML = """\
apiVersion: apps/v1
kind: Deployment
metadata:
  name: carts-db
  namespace: sock-shop
  labels:
    name: carts-db
spec:
  replicas: 2
  selector:
    matchLabels:
      name: carts-db
  template:
    metadata:
      labels:
        name: carts-db
    spec:
      containers:
      - name: carts-db
        image: mongo
        ports:
        - containerPort: 27017
"""

CARTS_DB_SVC_YAML = """\
apiVersion: v1
kind: Service
metadata:
  name: carts-db
  namespace: sock-shop
spec:
  selector:
    name: carts-db
  ports:
    - port: 27017
      targetPort: 27017
"""

FRONT_END_DEP_TEMPLATE = """\
apiVersion: apps/v1
kind: Deployment
metadata:
  name: front-end
  namespace: sock-shop
  labels:
    name: front-end
spec:
  replicas: {replicas}
  selector:
    matchLabels:
      name: front-end
  template:
    metadata:
      labels:
        name: front-end
    spec:
      containers:
      - name: front-end
        image: weaveworksdemos/front-end:0.3.12
        resources:
          requests:
            cpu: 100m
            memory: 100Mi
        ports:
        - containerPort: 8079
"""

FRONT_END_SVC_YAML = """\
apiVersion: v1
kind: Service
metadata:
  name: front-end
  namespace: sock-shop
spec:
  selector:
    name: front-end
  ports:
    - port: 80
      targetPort: 8079
"""


def write_sockshop_project(root: Path, front_end_replicas: int = 1) -> Path:
    manifests = root / "manifests"
    manifests.mkdir(parents=True, exist_ok=True)
    (root / "skaffold.yaml").write_text(SOCKSHOP_SKAFFOLD_YAML, encoding="utf-8")
    (manifests / "00-namespace.yaml").write_text(SOCKSHOP_NAMESPACE_YAML, encoding="utf-8")
    (manifests / "03-carts-db-dep.yaml").write_text(CARTS_DB_DEP_YAML, encoding="utf-8")
    (manifests / "04-carts-db-svc.yaml").write_text(CARTS_DB_SVC_YAML, encoding="utf-8")
    (manifests / "09-front-end-dep.yaml").write_text(
        FRONT_END_DEP_TEMPLATE.format(replicas=front_end_replicas), encoding="utf-8"
    )
    (manifests / "10-front-end-svc.yaml").write_text(FRONT_END_SVC_YAML, encoding="utf-8")
    return root


@pytest.fixture
def sockshop_project(tmp_path: Path) -> Path:
    return write_sockshop_project(tmp_path / "sock-shop")


SOCKSHOP_SERVICES = (
    "carts", "carts-db", "catalogue", "catalogue-db", "front-end", "orders",
    "orders-db", "payment", "queue-master", "rabbitmq", "session-db",
    "shipping", "user", "user-db",
)

_GENERIC_DEP_TEMPLATE = """\
apiVersion: apps/v1
kind: Deployment
metadata:
  name: {name}
  namespace: sock-shop
  labels:
    name: {name}
spec:
  replicas: {replicas}
  selector:
    matchLabels:
      name: {name}
  template:
    metadata:
      labels:
        name: {name}
    spec:
      containers:
      - name: {name}
        image: weaveworksdemos/{name}:latest
        ports:
        - containerPort: 80
"""

_GENERIC_SVC_TEMPLATE = """\
apiVersion: v1
kind: Service
metadata:
  name: {name}
  namespace: sock-shop
spec:
  selector:
    name: {name}
  ports:
    - port: 80
      targetPort: 80
"""


def write_sockshop_full_project(root: Path, front_end_replicas: int = 1) -> Path:
    """Full-shape analog: one namespace plus a deployment/service pair per
    microservice, 29 manifests in total."""
    manifests = root / "manifests"
    manifests.mkdir(parents=True, exist_ok=True)
    listing = ["manifests/00-namespace.yaml"]
    (manifests / "00-namespace.yaml").write_text(SOCKSHOP_NAMESPACE_YAML, encoding="utf-8")
    for i, name in enumerate(SOCKSHOP_SERVICES, start=1):
        replicas = front_end_replicas if name == "front-end" else 2
        dep = f"manifests/{2 * i - 1:02d}-{name}-dep.yaml"
        svc = f"manifests/{2 * i:02d}-{name}-svc.yaml"
        (root / dep).write_text(_GENERIC_DEP_TEMPLATE.format(name=name, replicas=replicas), encoding="utf-8")
        (root / svc).write_text(_GENERIC_SVC_TEMPLATE.format(name=name), encoding="utf-8")
        listing.extend([dep, svc])
    lines = "\n".join(f"    - {path}" for path in listing)
    (root / "skaffold.yaml").write_text(
        f"apiVersion: skaffold/v3\nkind: Config\nmetadata:\n  name: sock-shop\nmanifests:\n  rawYaml:\n{lines}\n",
        encoding="utf-8",
    )
    return root


# -- golden experiment plans --------------------------------------------------

NGINX_WORKSPACE = "sandbox/cycle_20241124_132128"
NGINX_WORKFLOW_NAME = "chaos-experiment-20241124-132854"
SOCKSHOP_WORKSPACE = "sandbox/cycle_20241127_043136"
SOCKSHOP_WORKFLOW_NAME = "chaos-experiment-20241127-045539"


def nginx_golden_plan() -> ExperimentPlan:
    """The small web-server fixture: stages 15/30/15 with eight schedule items."""
    pod_vac = VaCSpec(
        tool=ProbeTool.CLUSTER_API,
        target=ProbeTarget(namespace="default", kind="Pod", name="example-pod"),
        script_path="unittest_example-pod-running_mod0.py",
    )
    svc_vac = VaCSpec(
        tool=ProbeTool.LOAD_TEST,
        target=ProbeTarget(
            namespace="default",
            kind="Service",
            name="example-service",
            url="http://example-service.default.svc.cluster.local:80",
        ),
        script_path="unittest_example-service-availability_mod0.js",
    )
    scope = SelectorSpec(namespaces=("default",), label_selectors={"app": "example"})
    pod_chaos = Fault(
        kind=FaultKind.POD_CHAOS,
        name_id=0,
        params={"action": "pod-kill", "mode": "one"},
        scope=scope,
    )
    network_chaos = Fault(
        kind=FaultKind.NETWORK_CHAOS,
        name_id=1,
        params={
            "action": "delay",
            "mode": "all",
            "direction": "to",
            "device": "eth0",
            "delay": {"latency": "100ms", "jitter": "10ms", "correlation": "50"},
            "target": {"mode": "all", "selector": scope.to_json()},
        },
        scope=scope,
    )

    def vac_item(name: str, grace: int, duration: int, vac: VaCSpec) -> ScheduleItem:
        return ScheduleItem(
            name=name,
            is_fault=False,
            grace_period=Duration(grace),
            duration=Duration(duration),
            payload=vac,
        )

    def fault_item(fault: Fault, grace: int, duration: int) -> ScheduleItem:
        return ScheduleItem(
            name=fault.kind.value,
            is_fault=True,
            grace_period=Duration(grace),
            duration=Duration(duration),
            payload=fault,
        )

    return ExperimentPlan(
        total_time=Duration(60),
        pre_time=Duration(15),
        fault_time=Duration(30),
        post_time=Duration(15),
        stages={
            Stage.PRE: (
                vac_item("example-pod-running", 0, 5, pod_vac),
                vac_item("example-service-availability", 5, 5, svc_vac),
            ),
            Stage.FAULT: (
                vac_item("example-pod-running", 0, 10, pod_vac),
                fault_item(pod_chaos, 0, 10),
                vac_item("example-service-availability", 10, 20, svc_vac),
                fault_item(network_chaos, 10, 20),
            ),
            Stage.POST: (
                vac_item("example-pod-running", 2, 6, pod_vac),
                vac_item("example-service-availability", 6, 5, svc_vac),
            ),
        },
    )


def sockshop_golden_plan() -> ExperimentPlan:
    """The e-commerce fixture: stages 20/20/20 with CPU stress then pod kill."""
    carts_vac = VaCSpec(
        tool=ProbeTool.CLUSTER_API,
        target=ProbeTarget(namespace="sock-shop", kind="Deployment", name="carts-db"),
        script_path="unittest_carts-db-replicas_mod0.py",
    )
    frontend_vac = VaCSpec(
        tool=ProbeTool.CLUSTER_API,
        target=ProbeTarget(namespace="sock-shop", kind="Deployment", name="front-end"),
        script_path="unittest_front-end-replica_mod0.py",
    )
    stress = Fault(
        kind=FaultKind.STRESS_CHAOS,
        name_id=0,
        params={
            "mode": "all",
            "stressors": {"cpu": {"workers": 2, "load": 80}},
            "containerNames": ["carts-db"],
        },
        scope=SelectorSpec(namespaces=("sock-shop",), label_selectors={"name": "carts-db"}),
    )
    pod_kill = Fault(
        kind=FaultKind.POD_CHAOS,
        name_id=1,
        params={"action": "pod-kill", "mode": "one", "value": "1"},
        scope=SelectorSpec(namespaces=("sock-shop",), label_selectors={"name": "front-end"}),
    )

    def vac_item(name: str, grace: int, duration: int, vac: VaCSpec) -> ScheduleItem:
        return ScheduleItem(
            name=name,
            is_fault=False,
            grace_period=Duration(grace),
            duration=Duration(duration),
            payload=vac,
        )

    def fault_item(fault: Fault, grace: int, duration: int) -> ScheduleItem:
        return ScheduleItem(
            name=fault.kind.value,
            is_fault=True,
            grace_period=Duration(grace),
            duration=Duration(duration),
            payload=fault,
        )

    return ExperimentPlan(
        total_time=Duration(60),
        pre_time=Duration(20),
        fault_time=Duration(20),
        post_time=Duration(20),
        stages={
            Stage.PRE: (
                vac_item("carts-db-replicas", 0, 20, carts_vac),
                vac_item("front-end-replica", 0, 20, frontend_vac),
            ),
            Stage.FAULT: (
                vac_item("carts-db-replicas", 0, 10, carts_vac),
                fault_item(stress, 0, 10),
                vac_item("front-end-replica", 10, 5, frontend_vac),
                fault_item(pod_kill, 10, 5),
            ),
            Stage.POST: (
                vac_item("carts-db-replicas", 0, 10, carts_vac),
                vac_item("front-end-replica", 0, 10, frontend_vac),
            ),
        },
    )


NGINX_THRESHOLDS = {
    "example-pod-running": ThresholdSpec(
        metric=Metric.RUNNING_RATIO, comparator=Comparator.GE, value=0.9
    ),
    "example-service-availability": ThresholdSpec(
        metric=Metric.REQUEST_FAILURE_RATE, comparator=Comparator.LE, value=0.001
    ),
}

SOCKSHOP_THRESHOLDS = {
    "carts-db-replicas": ThresholdSpec(
        metric=Metric.READY_REPLICAS_MIN, comparator=Comparator.GE, value=1
    ),
    "front-end-replica": ThresholdSpec(
        metric=Metric.READY_REPLICAS_MIN, comparator=Comparator.GE, value=1
    ),
}
