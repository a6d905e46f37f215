"""Prompt templates with placeholder substitution and condition-bound
dynamic slots, loaded from package data keyed by agent id."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import yaml

from ..domain import DomainError


class TemplateError(DomainError):
    pass


_PLACEHOLDER_RE = re.compile(r"\{([a-zA-Z0-9_]+)\}")
_DYNAMIC_RE = re.compile(r"\{\{([a-zA-Z0-9_]+)\}\}")


@dataclass(frozen=True)
class PromptTemplate:
    """Role-tagged message templates for one agent.

    ``{name}`` placeholders substitute verbatim from bindings; ``{{name}}``
    slots substitute from condition-selected dynamic instruction blocks.
    """

    id: str
    roles: tuple[tuple[str, str], ...]
    dynamic_choices: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "roles", tuple((r, t) for r, t in self.roles))
        object.__setattr__(self, "dynamic_choices", {k: dict(v) for k, v in dict(self.dynamic_choices).items()})

    @property
    def placeholders(self) -> set[str]:
        names: set[str] = set()
        for _, text in self.roles:
            cleaned = _DYNAMIC_RE.sub("", text)
            names.update(_PLACEHOLDER_RE.findall(cleaned))
        return names

    @property
    def dynamic_slots(self) -> set[str]:
        names: set[str] = set()
        for _, text in self.roles:
            names.update(_DYNAMIC_RE.findall(text))
        return names


def render_prompt(
    template: PromptTemplate,
    bindings: Mapping[str, str],
    conditions: Mapping[str, str] | None = None,
) -> list[dict[str, str]]:
    """Instantiate the template into a message list.

    Substitution is verbatim (binding content is never escaped); every
    placeholder must be bound and every dynamic slot's condition known.
    """
    conditions = conditions or {}
    missing = sorted(template.placeholders - set(bindings))
    if missing:
        raise TemplateError(f"unbound placeholders: {missing}")

    dynamic_values: dict[str, str] = {}
    for slot in template.dynamic_slots:
        choices = template.dynamic_choices.get(slot)
        if not choices:
            raise TemplateError(f"no dynamic choices declared for slot {slot!r}")
        condition = conditions.get(slot)
        if condition is None:
            raise TemplateError(f"no condition given for dynamic slot {slot!r}")
        if condition not in choices:
            raise TemplateError(f"unknown condition {condition!r} for slot {slot!r}")
        dynamic_values[slot] = choices[condition]

    messages = []
    for role, text in template.roles:
        rendered = _DYNAMIC_RE.sub(lambda m: dynamic_values[m.group(1)], text)
        rendered = _PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), rendered)
        messages.append({"role": role, "content": rendered})
    return messages


def load_prompt_templates() -> dict[str, PromptTemplate]:
    """Load every template data file shipped with the package."""
    templates: dict[str, PromptTemplate] = {}
    package = resources.files(__package__) / "prompts"
    for entry in sorted(package.iterdir(), key=lambda p: p.name):
        if not entry.name.endswith(".yaml"):
            continue
        data = yaml.safe_load(entry.read_text(encoding="utf-8"))
        template = PromptTemplate(
            id=data["id"],
            roles=tuple((r["role"], r["text"]) for r in data["roles"]),
            dynamic_choices=data.get("dynamic_choices", {}),
        )
        templates[template.id] = template
    return templates
