"""HTTP service wrapping the core package: fault validation, plan
compilation, workflow patching, threshold evaluation, and full cycle runs."""

from __future__ import annotations

import io
import shutil
import tempfile
import uuid
import zipfile
from pathlib import Path

from fastapi import FastAPI, File, HTTPException, Response, UploadFile
from fastapi.responses import JSONResponse

from .. import __version__
from ..compiler import (
    ExperimentPlan,
    WorkflowMeta,
    compute_deadlines,
    emit_workflow,
    group_nodes,
    patch_workflow,
    validate_plan,
)
from ..cycle import CycleConfig, run_cycle
from ..domain import (
    Duration,
    DomainError,
    Fault,
    FaultKind,
    SelectorSpec,
    ThresholdSpec,
    format_duration,
    parse_duration,
)
from ..backends import BackendError
from ..faults import render_fault_body, validate_fault
from ..vac import evaluate_threshold, trace_from_values
from .models import (
    CompileRequest,
    CompileResponse,
    CycleOptions,
    CycleResponse,
    DurationRequest,
    DurationResponse,
    ExperimentResultModel,
    FaultRenderResponse,
    FaultRequest,
    FaultValidationResponse,
    HealthResponse,
    OutcomeModel,
    PatchRequest,
    PatchResponse,
    PlanValidationRequest,
    PlanValidationResponse,
    ThresholdEvaluationRequest,
    ThresholdEvaluationResponse,
)


def create_app(state_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="chaoscycle", version=__version__)
    app.state.root = Path(state_dir) if state_dir else Path(tempfile.mkdtemp(prefix="chaoscycle-"))
    app.state.root.mkdir(parents=True, exist_ok=True)
    app.state.cycles: dict[str, Path] = {}

    @app.exception_handler(DomainError)
    async def domain_error_handler(_, exc: DomainError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(BackendError)
    async def backend_error_handler(_, exc: BackendError):
        return JSONResponse(status_code=422, content={"detail": f"backend failure: {exc}"})

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/durations/parse", response_model=DurationResponse)
    def durations(request: DurationRequest) -> DurationResponse:
        if request.text is not None:
            duration = parse_duration(request.text)
        elif request.seconds is not None:
            duration = Duration(request.seconds)
        else:
            raise DomainError("provide either text or seconds")
        return DurationResponse(text=format_duration(duration), seconds=duration.seconds)

    def _fault_from(request: FaultRequest) -> Fault:
        return Fault(
            kind=FaultKind(request.kind),
            name_id=request.name_id,
            params=request.params,
            scope=SelectorSpec.from_json(request.scope),
        )

    @app.post("/faults/validate", response_model=FaultValidationResponse)
    def faults_validate(request: FaultRequest) -> FaultValidationResponse:
        violations, warnings = validate_fault(_fault_from(request))
        return FaultValidationResponse(
            ok=not violations,
            violations=[str(v) for v in violations],
            warnings=warnings,
        )

    @app.post("/faults/render", response_model=FaultRenderResponse)
    def faults_render(request: FaultRequest) -> FaultRenderResponse:
        key, body = render_fault_body(_fault_from(request))
        return FaultRenderResponse(key=key, body=body)

    @app.post("/plans/validate", response_model=PlanValidationResponse)
    def plans_validate(request: PlanValidationRequest) -> PlanValidationResponse:
        plan = ExperimentPlan.from_json(request.plan)
        violations = validate_plan(plan)
        return PlanValidationResponse(ok=not violations, violations=[str(v) for v in violations])

    @app.post("/plans/compile", response_model=CompileResponse)
    def plans_compile(request: CompileRequest) -> CompileResponse:
        plan = ExperimentPlan.from_json(request.plan)
        tree = compute_deadlines(group_nodes(plan), pad=Duration(request.pad_seconds))
        manifest = emit_workflow(tree, WorkflowMeta(name=request.name, workspace=request.workspace))
        return CompileResponse(manifest=manifest)

    @app.post("/workflows/patch", response_model=PatchResponse)
    def workflows_patch(request: PatchRequest) -> PatchResponse:
        selector_updates = {
            node: SelectorSpec.from_json(spec) for node, spec in request.selector_updates.items()
        }
        manifest = patch_workflow(request.manifest, selector_updates, request.script_updates)
        return PatchResponse(manifest=manifest)

    @app.post("/thresholds/evaluate", response_model=ThresholdEvaluationResponse)
    def thresholds_evaluate(request: ThresholdEvaluationRequest) -> ThresholdEvaluationResponse:
        threshold = ThresholdSpec.from_json(request.threshold)
        outcome = evaluate_threshold(threshold, trace_from_values(request.name, request.samples))
        return ThresholdEvaluationResponse(
            name=outcome.name, passed=outcome.passed, measured=outcome.measured, log=outcome.log
        )

    @app.post("/cycles", response_model=CycleResponse)
    async def cycles_run(
        project: UploadFile = File(...),
        instructions: str = "",
        backend: str = "simulator",
        planner: str = "stub",
        max_steady_states: int = 2,
        max_retries: int = 3,
        seed: int = 42,
        temperature: float = 0.0,
    ) -> CycleResponse:
        options = CycleOptions(
            instructions=instructions,
            backend=backend,
            planner=planner,
            max_steady_states=max_steady_states,
            max_retries=max_retries,
            seed=seed,
            temperature=temperature,
        )
        cycle_id = uuid.uuid4().hex[:12]
        cycle_dir = app.state.root / cycle_id
        upload_dir = cycle_dir / "upload"
        upload_dir.mkdir(parents=True)
        archive = upload_dir / "project.zip"
        archive.write_bytes(await project.read())
        try:
            with zipfile.ZipFile(archive) as zf:
                zf.extractall(upload_dir / "project")
        except zipfile.BadZipFile as exc:
            raise HTTPException(status_code=400, detail=f"not a zip archive: {exc}") from exc

        config = CycleConfig(
            max_steady_states=options.max_steady_states,
            max_retries=options.max_retries,
            seed=options.seed,
            temperature=options.temperature,
            backend=options.backend,
            planner=options.planner,
            instructions=options.instructions,
            cycle_name=cycle_id,
        )
        output = run_cycle(upload_dir / "project", config, cycle_dir / "out")
        app.state.cycles[cycle_id] = cycle_dir / "out"
        results = [
            ExperimentResultModel(
                scheduled=list(result.scheduled),
                outcomes=[
                    OutcomeModel(
                        name=o.name, passed=o.passed, measured=o.measured, log=o.log
                    )
                    for o in (result.outcomes[name] for name in result.scheduled)
                ],
            )
            for result in output.results
        ]
        return CycleResponse(
            cycle_id=cycle_id,
            status=output.status.value,
            summary=output.summary,
            improvements=len(output.history.improvement_history),
            experiments=len(output.results),
            results=results,
            ledger=output.ledger.to_json(),
            failure_reason=output.failure_reason,
        )

    @app.get("/cycles/{cycle_id}/archive")
    def cycles_archive(cycle_id: str) -> Response:
        out_dir = app.state.cycles.get(cycle_id)
        if out_dir is None or not out_dir.exists():
            raise HTTPException(status_code=404, detail=f"no cycle {cycle_id}")
        buffer = io.BytesIO()
        with zipfile.ZipFile(buffer, "w", zipfile.ZIP_DEFLATED) as zf:
            for path in sorted(out_dir.rglob("*")):
                if path.is_file():
                    zf.write(path, path.relative_to(out_dir))
        return Response(
            content=buffer.getvalue(),
            media_type="application/zip",
            headers={"Content-Disposition": f'attachment; filename="{cycle_id}.zip"'},
        )

    @app.delete("/cycles/{cycle_id}")
    def cycles_delete(cycle_id: str) -> dict:
        out_dir = app.state.cycles.pop(cycle_id, None)
        if out_dir is None:
            raise HTTPException(status_code=404, detail=f"no cycle {cycle_id}")
        shutil.rmtree(out_dir.parent, ignore_errors=True)
        return {"deleted": cycle_id}

    return app
