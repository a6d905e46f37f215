"""Pluggable planner layer: prompt templates, schema-constrained outputs,
verification loops, the chat client, and the cost ledger."""

from .ledger import CostLedger, ledger_cost
from .loop import Exhausted, VerificationLoopResult, verification_loop
from .planner import Planner
from .schemas import OutputSchema, SchemaField, parse_structured_output, prefill_for
from .stub import StubPlanner
from .templates import PromptTemplate, load_prompt_templates, render_prompt

__all__ = [
    "CostLedger",
    "Exhausted",
    "OutputSchema",
    "Planner",
    "PromptTemplate",
    "SchemaField",
    "StubPlanner",
    "VerificationLoopResult",
    "ledger_cost",
    "load_prompt_templates",
    "parse_structured_output",
    "prefill_for",
    "render_prompt",
    "verification_loop",
]
