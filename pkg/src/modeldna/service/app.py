"""FastAPI application exposing the pipeline stages.

The service owns no state beyond the run directories it writes; every call
carries its full config, so results depend only on the request body and the
target directory's current contents.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from ..config import ConfigError, parse_run_config
from ..container import ContainerError
from ..pipeline import DELTA_STAGES, STAGES, MissingPrerequisiteError, run_stage
from .schemas import HealthResponse, StageRequest, StageResponse


def create_app() -> FastAPI:
    from .. import __version__

    app = FastAPI(title="modeldna", version=__version__)

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__, stages=list(STAGES))

    @app.post("/stages/{stage}", response_model=StageResponse)
    def execute_stage(stage: str, request: StageRequest) -> StageResponse:
        if stage not in STAGES:
            raise HTTPException(
                status_code=404,
                detail=f"unknown stage {stage!r}; available: {', '.join(STAGES)}",
            )
        if request.delta is not None and stage not in DELTA_STAGES:
            raise HTTPException(
                status_code=422,
                detail=f"delta override only applies to: {', '.join(DELTA_STAGES)}",
            )
        try:
            cfg = parse_run_config(request.config)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        if request.seed is not None:
            cfg = cfg.model_copy(update={"seed": request.seed})
        try:
            result = run_stage(stage, cfg, out_dir=request.out_dir, delta=request.delta)
        except MissingPrerequisiteError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except (ContainerError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return StageResponse(
            run_dir=result.run_dir,
            stage=result.stage,
            skipped=result.skipped,
            messages=result.messages,
            artifacts=result.artifacts,
            payload=result.payload,
        )

    return app


app = create_app()
