"""Parameter schemas, validation, and node-body rendering for the seven
supported Chaos Mesh failure kinds."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .domain import DomainError, Fault, FaultKind, SelectorSpec

MODES = ("one", "all", "fixed", "fixed-percent", "random-max-percent")
VALUE_REQUIRING_MODES = frozenset({"fixed", "fixed-percent", "random-max-percent"})

# Workflow node body keys per kind (leading acronym lowercased).
BODY_KEYS: dict[FaultKind, str] = {
    FaultKind.POD_CHAOS: "podChaos",
    FaultKind.NETWORK_CHAOS: "networkChaos",
    FaultKind.DNS_CHAOS: "dnsChaos",
    FaultKind.HTTP_CHAOS: "httpChaos",
    FaultKind.STRESS_CHAOS: "stressChaos",
    FaultKind.IO_CHAOS: "ioChaos",
    FaultKind.TIME_CHAOS: "timeChaos",
}


@dataclass(frozen=True)
class FaultParamSchema:
    """Field inventory and domains for one fault kind (selector lives in scope)."""

    kind: FaultKind
    required_fields: tuple[str, ...]
    field_domains: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    known_fields: tuple[str, ...] = ()


FAULT_SCHEMAS: dict[FaultKind, FaultParamSchema] = {
    FaultKind.POD_CHAOS: FaultParamSchema(
        kind=FaultKind.POD_CHAOS,
        required_fields=("action", "mode"),
        field_domains={
            # pod-failure is deliberately not accepted; see validate_fault.
            "action": ("pod-kill", "container-kill"),
            "mode": MODES,
        },
        known_fields=("action", "mode", "value", "containerNames", "selector", "gracePeriod"),
    ),
    FaultKind.NETWORK_CHAOS: FaultParamSchema(
        kind=FaultKind.NETWORK_CHAOS,
        required_fields=("action", "mode"),
        field_domains={
            "action": ("netem", "delay", "loss", "duplicate", "corrupt", "partition", "bandwidth"),
            "mode": MODES,
            "direction": ("from", "to", "both"),
        },
        known_fields=(
            "action",
            "mode",
            "value",
            "direction",
            "target",
            "externalTargets",
            "device",
            "delay",
            "loss",
            "duplicated",
            "corrupt",
            "rate",
            "bandwidth",
            "selector",
        ),
    ),
    FaultKind.DNS_CHAOS: FaultParamSchema(
        kind=FaultKind.DNS_CHAOS,
        required_fields=(),
        field_domains={"action": ("random", "error"), "mode": MODES},
        known_fields=("action", "mode", "value", "patterns", "selector"),
    ),
    FaultKind.HTTP_CHAOS: FaultParamSchema(
        kind=FaultKind.HTTP_CHAOS,
        required_fields=("mode", "target", "port"),
        field_domains={"mode": MODES, "target": ("Request", "Response")},
        known_fields=(
            "mode",
            "value",
            "target",
            "port",
            "code",
            "path",
            "method",
            "request_headers",
            "abort",
            "delay",
            "replace",
            "patch",
            "selector",
        ),
    ),
    FaultKind.STRESS_CHAOS: FaultParamSchema(
        kind=FaultKind.STRESS_CHAOS,
        required_fields=("mode",),
        field_domains={"mode": MODES},
        known_fields=("mode", "value", "stressors", "stressngStressors", "containerNames", "selector"),
    ),
    FaultKind.IO_CHAOS: FaultParamSchema(
        kind=FaultKind.IO_CHAOS,
        required_fields=("action", "mode", "volumePath"),
        field_domains={
            "action": ("latency", "fault", "attrOverride", "mistake"),
            "mode": MODES,
        },
        known_fields=(
            "action",
            "mode",
            "value",
            "volumePath",
            "path",
            "methods",
            "percent",
            "containerNames",
            "delay",
            "errno",
            "attr",
            "mistake",
            "selector",
        ),
    ),
    FaultKind.TIME_CHAOS: FaultParamSchema(
        kind=FaultKind.TIME_CHAOS,
        required_fields=("timeOffset", "mode"),
        field_domains={"mode": MODES},
        known_fields=("timeOffset", "clockIds", "mode", "value", "containerNames", "selector"),
    ),
}

# Fields that carry string values even when they look numeric ("50", "1").
STRING_VALUED_FIELDS = frozenset({"value", "correlation", "loss", "duplicate", "corrupt", "timeOffset"})


@dataclass(frozen=True)
class Violation:
    field: str
    expected: str
    found: Any

    def __str__(self) -> str:
        return f"{self.field}: expected {self.expected}, found {self.found!r}"


class FaultValidationError(DomainError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def validate_fault(fault: Fault) -> tuple[list[Violation], list[str]]:
    """Check a fault's params against its kind's schema.

    Returns (violations, warnings); ok means no violations. Unknown extra
    fields are warnings, not errors.
    """
    schema = FAULT_SCHEMAS[fault.kind]
    params = dict(fault.params)
    violations: list[Violation] = []
    warnings: list[str] = []

    for name in schema.required_fields:
        if name not in params:
            violations.append(Violation(name, "required field present", None))

    for name, domain in schema.field_domains.items():
        if name in params and params[name] not in domain:
            violations.append(Violation(name, f"one of {sorted(domain)}", params[name]))

    action = params.get("action")
    if fault.kind is FaultKind.POD_CHAOS and action == "pod-failure":
        # The catalog rejects pod-failure outright: its observable effect
        # depends on probe configuration and it is unreliable in workflows.
        violations = [v for v in violations if v.field != "action"]
        violations.append(Violation("action", "one of ['container-kill', 'pod-kill'] (pod-failure not supported)", action))

    if action == "container-kill" and not params.get("containerNames"):
        violations.append(Violation("containerNames", "required when action is container-kill", params.get("containerNames")))

    mode = params.get("mode")
    if mode in VALUE_REQUIRING_MODES and "value" not in params:
        violations.append(Violation("value", f"required when mode is {mode}", None))

    if fault.kind is FaultKind.IO_CHAOS:
        if action == "attrOverride" and "attr" not in params:
            violations.append(Violation("attr", "required when action is attrOverride", None))
        if action == "mistake" and "mistake" not in params:
            violations.append(Violation("mistake", "required when action is mistake", None))
        if "deplay" in params:
            warnings.append("field 'deplay' read as 'delay'")

    if fault.kind is FaultKind.HTTP_CHAOS and "port" in params:
        if not isinstance(params["port"], int) or isinstance(params["port"], bool):
            violations.append(Violation("port", "integer", params["port"]))

    if "duration" in params:
        violations.append(
            Violation("duration", "no duration field (injection windows use the node deadline)", params["duration"])
        )

    for name in params:
        if name not in schema.known_fields and name != "duration":
            warnings.append(f"unknown field {name!r} for {fault.kind.value} (kept)")

    if "selector" in params:
        warnings.append("selector in params is ignored; the fault scope is authoritative")

    return violations, warnings


def is_valid(fault: Fault) -> bool:
    violations, _ = validate_fault(fault)
    return not violations


def strip_duration(params: Mapping[str, Any]) -> dict[str, Any]:
    """Drop any duration field; everything else untouched. Idempotent."""
    return {k: v for k, v in params.items() if k != "duration"}


def _sorted_deep(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {k: _sorted_deep(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_sorted_deep(v) for v in value]
    return value


def render_fault_body(fault: Fault) -> tuple[str, dict[str, Any]]:
    """Render a validated fault into its workflow node body.

    Returns (body key, body) where the key is the kind's lower-camel form and
    the body merges params with the scope selector, keys sorted.
    """
    violations, _ = validate_fault(fault)
    if violations:
        raise FaultValidationError(violations)
    body = {k: v for k, v in fault.params.items() if k != "selector"}
    if "deplay" in body:
        body["delay"] = body.pop("deplay")
    body["selector"] = fault.scope.to_json()
    return BODY_KEYS[fault.kind], _sorted_deep(body)


_KIND_BY_BODY_KEY = {v: k for k, v in BODY_KEYS.items()}


def parse_fault_body(body_key: str, body: Mapping[str, Any], name_id: int = 0) -> Fault:
    """Inverse of render_fault_body for bodies found in emitted manifests."""
    if body_key not in _KIND_BY_BODY_KEY:
        raise DomainError(f"unknown fault body key {body_key!r}")
    params = {k: v for k, v in body.items() if k != "selector"}
    selector = body.get("selector")
    if not selector:
        raise DomainError(f"fault body {body_key} has no selector")
    return Fault(
        kind=_KIND_BY_BODY_KEY[body_key],
        name_id=name_id,
        params=params,
        scope=SelectorSpec.from_json(selector),
    )
