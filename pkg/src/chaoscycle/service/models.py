"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field


class FaultRequest(BaseModel):
    kind: str
    name_id: int = 0
    params: dict[str, Any] = Field(default_factory=dict)
    scope: dict[str, Any]


class FaultValidationResponse(BaseModel):
    ok: bool
    violations: list[str] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)


class FaultRenderResponse(BaseModel):
    key: str
    body: dict[str, Any]


class PlanValidationRequest(BaseModel):
    plan: dict[str, Any]


class PlanValidationResponse(BaseModel):
    ok: bool
    violations: list[str] = Field(default_factory=list)


class CompileRequest(BaseModel):
    plan: dict[str, Any]
    name: str = "chaos-experiment"
    workspace: str = ""
    pad_seconds: int = 300


class CompileResponse(BaseModel):
    manifest: str


class PatchRequest(BaseModel):
    manifest: str
    selector_updates: dict[str, dict[str, Any]] = Field(default_factory=dict)
    script_updates: dict[str, str] = Field(default_factory=dict)


class PatchResponse(BaseModel):
    manifest: str


class ThresholdEvaluationRequest(BaseModel):
    threshold: dict[str, Any]
    name: str = "probe"
    samples: list[float]


class ThresholdEvaluationResponse(BaseModel):
    name: str
    passed: bool
    measured: float
    log: str


class DurationRequest(BaseModel):
    text: Optional[str] = None
    seconds: Optional[int] = None


class DurationResponse(BaseModel):
    text: str
    seconds: int


class CycleOptions(BaseModel):
    instructions: str = ""
    backend: str = "simulator"
    planner: str = "stub"
    max_steady_states: int = 2
    max_retries: int = 3
    seed: int = 42
    temperature: float = 0.0


class OutcomeModel(BaseModel):
    name: str
    passed: bool
    measured: float
    log: str


class ExperimentResultModel(BaseModel):
    scheduled: list[str]
    outcomes: list[OutcomeModel]


class CycleResponse(BaseModel):
    cycle_id: str
    status: str
    summary: str
    improvements: int
    experiments: int
    results: list[ExperimentResultModel]
    ledger: dict[str, Any]
    failure_reason: str = ""


class HealthResponse(BaseModel):
    status: str
    version: str
