"""Run configuration: schema-validated, camelCase on disk, snake_case in code.

A run config fully determines a run: synthetic data layout, classifier
architecture, the three training recipes, pool composition, and fingerprint
training knobs. Unknown keys are rejected so typos fail loudly instead of
silently falling back to defaults.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic.alias_generators import to_camel

from .engine import DEFAULT_DELTA_SWEEP, MgmpConfig
from .nets import TrainConfig
from .util import canonical_json, sha256_hex

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised when a run config fails to parse or validate."""


class _Section(BaseModel):
    model_config = ConfigDict(
        alias_generator=to_camel, populate_by_name=True, extra="forbid"
    )


class DataSection(_Section):
    """One parent blob problem carved into disjoint equal-width tasks."""

    classes_per_task: int = Field(default=4, ge=2)
    pool_tasks: int = Field(default=3, ge=1)
    eval_tasks: int = Field(default=2, ge=1)
    per_class: int = Field(default=40, ge=1)
    dim: int = Field(default=8, ge=1)
    spread: float = Field(default=0.6, gt=0)

    @property
    def total_classes(self) -> int:
        return self.classes_per_task * (1 + self.pool_tasks + self.eval_tasks)


class ModelSection(_Section):
    """Architecture of the source and pool classifiers."""

    hidden: list[int] = Field(default=[32, 32], min_length=1)
    dropout_rate: float = Field(default=0.0, ge=0, lt=1)

    @field_validator("hidden")
    @classmethod
    def _positive_widths(cls, v: list[int]) -> list[int]:
        if any(w < 1 for w in v):
            raise ValueError("hidden widths must be positive")
        return v


class FitSection(_Section):
    learning_rate: float = Field(default=0.01, gt=0)
    epochs: int = Field(default=30, ge=0)
    batch_size: int = Field(default=16, ge=1)
    weight_decay: float = Field(default=0.0, ge=0)

    def to_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            weight_decay=self.weight_decay,
            seed=seed,
        )


class PoolSection(_Section):
    """Per-relation model totals; models rotate over that role's tasks."""

    pool_homologous: int = Field(default=3, ge=1)
    pool_non_homologous: int = Field(default=3, ge=1)
    eval_homologous: int = Field(default=2, ge=0)
    eval_non_homologous: int = Field(default=2, ge=0)


class RunConfig(_Section):
    schema_version: int = CONFIG_SCHEMA_VERSION
    seed: int = 0
    out_dir: str | None = None
    data: DataSection = Field(default_factory=DataSection)
    model: ModelSection = Field(default_factory=ModelSection)
    source_train: FitSection = Field(default_factory=FitSection)
    fine_tune: FitSection = Field(default_factory=lambda: FitSection(epochs=10, learning_rate=0.005))
    scratch_train: FitSection = Field(default_factory=FitSection)
    # Recipe for the dedicated forgetting/replacement probe pair. Deliberately
    # harsher than fine_tune: the probe exists to surface catastrophic
    # forgetting, while pool models stay close enough to the source to verify.
    probe_train: FitSection = Field(
        default_factory=lambda: FitSection(epochs=40, learning_rate=0.01)
    )
    pool: PoolSection = Field(default_factory=PoolSection)
    mgmp: dict[str, Any] = Field(default_factory=dict)
    delta_sweep: list[float] = Field(default=list(DEFAULT_DELTA_SWEEP), min_length=1)

    @field_validator("schema_version")
    @classmethod
    def _known_schema(cls, v: int) -> int:
        if v != CONFIG_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported schemaVersion {v}; this build reads version "
                f"{CONFIG_SCHEMA_VERSION}"
            )
        return v

    @field_validator("delta_sweep")
    @classmethod
    def _deltas_in_range(cls, v: list[float]) -> list[float]:
        if any(not 0 < d <= 1 for d in v):
            raise ValueError("every sweep delta must lie in (0, 1]")
        return v

    @field_validator("mgmp")
    @classmethod
    def _mgmp_parses(cls, v: dict[str, Any]) -> dict[str, Any]:
        try:
            MgmpConfig.from_json({k: val for k, val in v.items()})
        except (ValueError, TypeError) as exc:
            raise ValueError(f"invalid mgmp section: {exc}") from exc
        return v

    def mgmp_config(self) -> MgmpConfig:
        """The fully resolved fingerprint-training config for this run.

        The seed defaults to a value derived from the run seed; an explicit
        mgmp.seed wins.
        """
        from .util import derive_seed

        section = dict(self.mgmp)
        if "seed" not in section:
            section["seed"] = derive_seed(self.seed, "stage", "mgmp")
        return MgmpConfig.from_json(section)


def resolved_config(cfg: RunConfig) -> dict[str, Any]:
    """Every knob materialized, defaults included, camelCase keys."""
    return {
        "schemaVersion": cfg.schema_version,
        "seed": cfg.seed,
        "outDir": cfg.out_dir,
        "data": cfg.data.model_dump(by_alias=True),
        "model": cfg.model.model_dump(by_alias=True),
        "sourceTrain": cfg.source_train.model_dump(by_alias=True),
        "fineTune": cfg.fine_tune.model_dump(by_alias=True),
        "scratchTrain": cfg.scratch_train.model_dump(by_alias=True),
        "probeTrain": cfg.probe_train.model_dump(by_alias=True),
        "pool": cfg.pool.model_dump(by_alias=True),
        "mgmp": cfg.mgmp_config().to_json(),
        "deltaSweep": list(cfg.delta_sweep),
    }


def config_hash(cfg: RunConfig) -> str:
    """Short content hash identifying a fully resolved run config."""
    return sha256_hex(canonical_json(resolved_config(cfg)).encode("utf-8"))[:12]


def parse_run_config(obj: dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(obj)
    except Exception as exc:
        raise ConfigError(f"invalid run config: {exc}") from exc


def load_run_config(path: Path | str) -> RunConfig:
    """Read a YAML or JSON run config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            obj = yaml.safe_load(text)
        else:
            obj = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: cannot parse: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return parse_run_config(obj)
