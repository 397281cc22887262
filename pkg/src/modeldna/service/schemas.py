"""Request and response bodies for the stage-execution API."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, ConfigDict, Field
from pydantic.alias_generators import to_camel


class _ApiModel(BaseModel):
    model_config = ConfigDict(
        alias_generator=to_camel, populate_by_name=True, extra="forbid"
    )


class StageRequest(_ApiModel):
    """One stage execution: the run config inline plus optional overrides."""

    config: dict[str, Any]
    out_dir: str | None = None
    seed: int | None = None
    delta: float | None = Field(default=None, gt=0, le=1)


class StageResponse(_ApiModel):
    run_dir: str
    stage: str
    skipped: bool
    messages: list[str]
    artifacts: dict[str, str]
    payload: Any | None = None


class HealthResponse(_ApiModel):
    status: str
    version: str
    stages: list[str]
