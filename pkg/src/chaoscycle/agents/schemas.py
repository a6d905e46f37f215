"""JSON output schemas with prefill-based decoding.

Planners emit one JSON object per step; the prefill pins the first key so
replies start mid-object and are reattached before decoding. Parse errors are
worded for feeding back into the verification loop.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Mapping, Optional

from ..domain import DomainError


class SchemaError(DomainError):
    pass


@dataclass(frozen=True)
class ParseFailure(Exception):
    """Field-level decode failure; str() is the feedback message."""

    message: str

    def __str__(self) -> str:
        return self.message


@dataclass(frozen=True)
class SchemaField:
    name: str
    kind: str = "string"  # string | integer | number | boolean | array | object
    required: bool = True
    enum: tuple[Any, ...] = ()
    description: str = ""


_KIND_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "array": lambda v: isinstance(v, list),
    "object": lambda v: isinstance(v, Mapping),
}


@dataclass(frozen=True)
class OutputSchema:
    """Ordered field list; the first field heads the prefill."""

    fields: tuple[SchemaField, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "fields", tuple(self.fields))
        if not self.fields:
            raise SchemaError("output schema needs at least one field")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate schema field names: {names}")

    @property
    def first_field(self) -> str:
        return self.fields[0].name

    @classmethod
    def of(cls, *specs: str | SchemaField) -> "OutputSchema":
        fields = tuple(s if isinstance(s, SchemaField) else SchemaField(name=s) for s in specs)
        return cls(fields=fields)


def prefill_for(schema: OutputSchema) -> str:
    """The forced assistant-turn opener: ``{"<first_field>":``."""
    return '{"%s":' % schema.first_field


_FENCE_RE = re.compile(r"^```[a-zA-Z0-9_-]*\s*\n?|\n?```\s*$")


def _strip_fences(text: str) -> str:
    stripped = text.strip()
    while True:
        new = _FENCE_RE.sub("", stripped).strip()
        if new == stripped:
            return new
        stripped = new


def parse_structured_output(text: str, schema: OutputSchema, prefill: Optional[str] = None) -> dict[str, Any]:
    """Decode a planner reply against the schema.

    Strips code fences, reattaches the prefill when the reply starts
    mid-object, then checks required fields, kinds, and enumerations.
    Raises ParseFailure with a message suitable as loop feedback.
    """
    prefill = prefill if prefill is not None else prefill_for(schema)
    body = _strip_fences(text)
    if not body.lstrip().startswith("{"):
        body = prefill + body
    try:
        value = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ParseFailure(f"output is not valid JSON: {exc}") from exc
    if not isinstance(value, dict):
        raise ParseFailure(f"output must be a JSON object, got {type(value).__name__}")
    for spec in schema.fields:
        if spec.name not in value:
            if spec.required:
                raise ParseFailure(f"missing field {spec.name}")
            continue
        observed = value[spec.name]
        if not _KIND_CHECKS[spec.kind](observed):
            raise ParseFailure(f"field {spec.name} must be {spec.kind}, got {type(observed).__name__}")
        if spec.enum and observed not in spec.enum:
            raise ParseFailure(
                f"field {spec.name} must be one of {list(spec.enum)}, got {observed!r}"
            )
    return value


def serialize_with_prefill(value: Mapping[str, Any], schema: OutputSchema) -> str:
    """Encode a schema-valid value the way a planner reply arrives: the text
    after the prefill."""
    ordered = {spec.name: value[spec.name] for spec in schema.fields if spec.name in value}
    for key in value:
        if key not in ordered:
            ordered[key] = value[key]
    full = json.dumps(ordered)
    prefill = prefill_for(schema)
    if not full.startswith(prefill):
        # Key order guarantees the prefill prefix; fall back to full text.
        return full
    return full[len(prefill):]
