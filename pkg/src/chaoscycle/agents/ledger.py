"""Token and cost accounting, one row per cycle phase."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from ..domain import CyclePhase, DomainError

# Price defaults per one token (configured per million in most price tables).
DEFAULT_PRICE_IN = 2.50 / 1_000_000
DEFAULT_PRICE_OUT = 10.00 / 1_000_000


@dataclass
class PhaseUsage:
    input_tokens: int = 0
    output_tokens: int = 0
    wall_time_s: float = 0.0

    def add(self, input_tokens: int, output_tokens: int) -> None:
        if input_tokens < 0 or output_tokens < 0:
            raise DomainError("token counts must be non-negative")
        self.input_tokens += input_tokens
        self.output_tokens += output_tokens


@dataclass
class CostLedger:
    """Per-phase token usage priced linearly."""

    price_in: float = DEFAULT_PRICE_IN
    price_out: float = DEFAULT_PRICE_OUT
    phases: dict[str, PhaseUsage] = field(default_factory=dict)
    approximate_counts: bool = False

    def record(self, phase: CyclePhase | str, input_tokens: int, output_tokens: int) -> None:
        key = phase.value if isinstance(phase, CyclePhase) else str(phase)
        self.phases.setdefault(key, PhaseUsage()).add(input_tokens, output_tokens)

    def record_time(self, phase: CyclePhase | str, seconds: float) -> None:
        key = phase.value if isinstance(phase, CyclePhase) else str(phase)
        self.phases.setdefault(key, PhaseUsage()).wall_time_s += seconds

    def phase_cost(self, phase: str) -> float:
        usage = self.phases.get(phase, PhaseUsage())
        return usage.input_tokens * self.price_in + usage.output_tokens * self.price_out

    def total_input_tokens(self) -> int:
        return sum(u.input_tokens for u in self.phases.values())

    def total_output_tokens(self) -> int:
        return sum(u.output_tokens for u in self.phases.values())

    def merge(self, other: "CostLedger") -> "CostLedger":
        if (self.price_in, self.price_out) != (other.price_in, other.price_out):
            raise DomainError("cannot merge ledgers with different prices")
        merged = CostLedger(
            price_in=self.price_in,
            price_out=self.price_out,
            approximate_counts=self.approximate_counts or other.approximate_counts,
        )
        for source in (self, other):
            for phase, usage in source.phases.items():
                merged.record(phase, usage.input_tokens, usage.output_tokens)
                merged.record_time(phase, usage.wall_time_s)
        return merged

    def to_json(self) -> dict[str, Any]:
        rows = []
        for phase, usage in self.phases.items():
            rows.append(
                {
                    "phase": phase,
                    "input_tokens": usage.input_tokens,
                    "output_tokens": usage.output_tokens,
                    "cost_usd": round(self.phase_cost(phase), 6),
                    "wall_time_s": round(usage.wall_time_s, 3),
                }
            )
        return {
            "price_per_input_token": self.price_in,
            "price_per_output_token": self.price_out,
            "approximate_counts": self.approximate_counts,
            "phases": rows,
            "total": {
                "input_tokens": self.total_input_tokens(),
                "output_tokens": self.total_output_tokens(),
                "cost_usd": round(ledger_cost(self), 6),
                "cost_display": display_cost(ledger_cost(self)),
            },
        }

    def dump(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def ledger_cost(ledger: CostLedger) -> float:
    """Exact linear cost over all phases; rounding happens only at display."""
    return sum(ledger.phase_cost(phase) for phase in ledger.phases)


def display_cost(cost: float) -> str:
    return f"${cost:.2f}"


def approx_token_count(texts: Iterable[str] | str) -> int:
    """Whitespace-token approximation used by the stub planner's accounting."""
    if isinstance(texts, str):
        texts = [texts]
    return sum(len(t.split()) for t in texts)
