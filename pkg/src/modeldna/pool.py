"""Source model plus a pool of related and unrelated classifiers.

A pool entry is either homologous (initialized from the source checkpoint and
fine-tuned on a disjoint task) or non-homologous (random init, trained from
scratch on the same kind of task). Entries carry a role: "pool" entries feed
training, "eval" entries are held out for verification quality measurement.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .container import ContainerError
from .data import LabeledDataset
from .nets import (
    PARAMETERIZED_KINDS,
    ArchDescriptor,
    ArchitectureError,
    Checkpoint,
    LayeredModel,
    Lineage,
    TrainConfig,
    build_model,
    checkpoint_from_model,
    dense,
    evaluate_accuracy,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    train,
)
from .util import derive_seed, read_json, sha256_file, write_json

RELATION_HOMOLOGOUS = "homologous"
RELATION_NON_HOMOLOGOUS = "nonHomologous"
RELATIONS = (RELATION_HOMOLOGOUS, RELATION_NON_HOMOLOGOUS)

ROLE_POOL = "pool"
ROLE_EVAL = "eval"
ROLES = (ROLE_POOL, ROLE_EVAL)

POOL_FORMAT_VERSION = 1


class PoolError(ValueError):
    """Raised for pools that violate structural invariants."""


@dataclass
class PoolEntry:
    model_id: str
    relation: str
    role: str
    task_id: str
    checkpoint: Checkpoint

    def __post_init__(self) -> None:
        if self.relation not in RELATIONS:
            raise PoolError(f"unknown relation {self.relation!r}")
        if self.role not in ROLES:
            raise PoolError(f"unknown role {self.role!r}")
        init_from = self.checkpoint.lineage.init_from
        if self.relation == RELATION_HOMOLOGOUS and init_from is None:
            raise PoolError(
                f"entry {self.model_id}: homologous entries must descend from a source"
            )
        if self.relation == RELATION_NON_HOMOLOGOUS and init_from is not None:
            raise PoolError(
                f"entry {self.model_id}: non-homologous entries must not have initFrom"
            )
        if self.checkpoint.lineage.trained_on_task_id != self.task_id:
            raise PoolError(
                f"entry {self.model_id}: task_id disagrees with checkpoint lineage"
            )

    def load_model(self) -> LayeredModel:
        return model_from_checkpoint(self.checkpoint)


@dataclass
class ModelPool:
    source: Checkpoint
    entries: list[PoolEntry]

    def __post_init__(self) -> None:
        ids = [e.model_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise PoolError("pool entry model ids must be unique")
        for relation in RELATIONS:
            if not self.select(relation, ROLE_POOL):
                raise PoolError(f"pool needs at least one {relation} entry with role=pool")
        pool_tasks = {e.task_id for e in self.entries if e.role == ROLE_POOL}
        eval_tasks = {e.task_id for e in self.entries if e.role == ROLE_EVAL}
        overlap = pool_tasks & eval_tasks
        if overlap:
            raise PoolError(f"pool and eval roles share task ids: {sorted(overlap)}")
        for entry in self.entries:
            if entry.relation == RELATION_HOMOLOGOUS:
                if entry.checkpoint.lineage.init_from != self.source.checkpoint_id:
                    raise PoolError(
                        f"entry {entry.model_id} descends from "
                        f"{entry.checkpoint.lineage.init_from!r}, not this source"
                    )

    def select(self, relation: str, role: str) -> list[PoolEntry]:
        return [e for e in self.entries if e.relation == relation and e.role == role]

    def entry(self, model_id: str) -> PoolEntry:
        for e in self.entries:
            if e.model_id == model_id:
                return e
        raise KeyError(f"no pool entry with model id {model_id!r}")


def _arch_with_classes(arch: ArchDescriptor, num_classes: int) -> ArchDescriptor:
    """Same layer stack with the final dense width set to num_classes."""
    if arch.num_classes == num_classes:
        return arch
    specs = list(arch.layer_specs)
    for i in range(len(specs) - 1, -1, -1):
        if specs[i].kind in PARAMETERIZED_KINDS:
            if specs[i].kind != "dense":
                raise ArchitectureError("only dense output layers can be re-widened")
            specs[i] = dense(specs[i].get("inFeatures"), num_classes)
            return ArchDescriptor(tuple(specs), arch.input_shape, num_classes)
    raise ArchitectureError("architecture has no parameterized layers")


def _adapted_copy(source_model: LayeredModel, num_classes: int, seed: int) -> LayeredModel:
    """Copy of the source; the classification head is re-initialized only when
    the class count changes, otherwise it is reused as-is."""
    if source_model.arch.num_classes == num_classes:
        return copy.deepcopy(source_model)
    new_arch = _arch_with_classes(source_model.arch, num_classes)
    model = build_model(new_arch, seed)
    src_mods = source_model.parameterized_modules()
    dst_mods = model.parameterized_modules()
    with torch.no_grad():
        for dst, src in zip(dst_mods[:-1], src_mods[:-1]):
            dst.weight.copy_(src.weight)
            dst.bias.copy_(src.bias)
    return model


def _metrics(model: LayeredModel, data: LabeledDataset, history: list[float]) -> dict:
    out = {"trainAccuracy": evaluate_accuracy(model, data)}
    if history:
        out["finalLoss"] = history[-1]
    return out


def train_source(
    arch: ArchDescriptor, data: LabeledDataset, cfg: TrainConfig, model_id: str
) -> Checkpoint:
    """Random-init model trained on the designated source task."""
    model = build_model(arch, cfg.seed)
    model, history = train(model, data, cfg)
    lineage = Lineage(init_from=None, trained_on_task_id=data.task_id, seed=cfg.seed)
    return checkpoint_from_model(model, model_id, lineage, _metrics(model, data, history))


def train_homologous(
    source: Checkpoint, data: LabeledDataset, cfg: TrainConfig, model_id: str
) -> Checkpoint:
    """Fine-tune a copy of the source on a new task; lineage records the source."""
    source_model = model_from_checkpoint(source)
    model = _adapted_copy(source_model, data.num_classes, cfg.seed)
    model, history = train(model, data, cfg)
    lineage = Lineage(
        init_from=source.checkpoint_id, trained_on_task_id=data.task_id, seed=cfg.seed
    )
    return checkpoint_from_model(model, model_id, lineage, _metrics(model, data, history))


def train_non_homologous(
    arch: ArchDescriptor, data: LabeledDataset, cfg: TrainConfig, model_id: str
) -> Checkpoint:
    """Train from scratch with no connection to any source model."""
    model = build_model(_arch_with_classes(arch, data.num_classes), cfg.seed)
    model, history = train(model, data, cfg)
    lineage = Lineage(init_from=None, trained_on_task_id=data.task_id, seed=cfg.seed)
    return checkpoint_from_model(model, model_id, lineage, _metrics(model, data, history))


def build_pool(
    source: Checkpoint,
    pool_tasks: Sequence[LabeledDataset],
    eval_tasks: Sequence[LabeledDataset],
    pool_counts: tuple[int, int],
    eval_counts: tuple[int, int],
    fine_tune_cfg: TrainConfig,
    scratch_cfg: TrainConfig,
    base_seed: int,
) -> ModelPool:
    """Train a pool around a source model.

    ``pool_counts`` / ``eval_counts`` are per-relation totals
    (homologous, nonHomologous) for that role; models are assigned to the
    role's tasks round-robin, so counts (5, 5) over 5 tasks yield one model
    per relation per task. Every model gets its own derived training seed.
    """
    if not pool_tasks:
        raise PoolError("build_pool needs at least one pool task")
    if min(pool_counts) < 1:
        raise PoolError("pool_counts must include at least one model per relation")
    if eval_counts != (0, 0) and not eval_tasks:
        raise PoolError("eval_counts given but no eval tasks")
    arch = source.arch
    entries: list[PoolEntry] = []
    for role, tasks, counts in (
        (ROLE_POOL, pool_tasks, pool_counts),
        (ROLE_EVAL, eval_tasks, eval_counts),
    ):
        for relation, count in zip(RELATIONS, counts):
            tag = "hom" if relation == RELATION_HOMOLOGOUS else "non"
            for j in range(count):
                data = tasks[j % len(tasks)]
                model_id = f"{role}-{tag}-{j:02d}"
                seed = derive_seed(base_seed, role, relation, str(j))
                if relation == RELATION_HOMOLOGOUS:
                    cfg = TrainConfig(**{**fine_tune_cfg.__dict__, "seed": seed})
                    ckpt = train_homologous(source, data, cfg, model_id)
                else:
                    cfg = TrainConfig(**{**scratch_cfg.__dict__, "seed": seed})
                    ckpt = train_non_homologous(arch, data, cfg, model_id)
                entries.append(
                    PoolEntry(
                        model_id=model_id,
                        relation=relation,
                        role=role,
                        task_id=data.task_id,
                        checkpoint=ckpt,
                    )
                )
    return ModelPool(source=source, entries=entries)


def sample_pair(pool: ModelPool, rng: np.random.Generator) -> tuple[PoolEntry, PoolEntry]:
    """One homologous and one non-homologous pool-role entry, each uniform."""
    picks = []
    for relation in RELATIONS:
        candidates = pool.select(relation, ROLE_POOL)
        if not candidates:
            raise PoolError(f"pool has no {relation} entries with role=pool to sample")
        picks.append(candidates[int(rng.integers(len(candidates)))])
    return picks[0], picks[1]


def save_pool(pool: ModelPool, run_dir: Path | str) -> Path:
    """Write checkpoints/<modelId>.ckpt plus a pool.json manifest."""
    run_dir = Path(run_dir)
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    def _write(ckpt: Checkpoint) -> dict:
        path = ckpt_dir / f"{ckpt.checkpoint_id}.ckpt"
        digest = save_checkpoint(ckpt, path)
        return {"modelId": ckpt.checkpoint_id, "file": f"checkpoints/{path.name}", "sha256": digest}

    manifest = {
        "formatVersion": POOL_FORMAT_VERSION,
        "source": _write(pool.source),
        "entries": [
            {
                **_write(e.checkpoint),
                "relation": e.relation,
                "role": e.role,
                "taskId": e.task_id,
            }
            for e in pool.entries
        ],
    }
    path = run_dir / "pool.json"
    write_json(path, manifest)
    return path


def load_pool(run_dir: Path | str) -> ModelPool:
    run_dir = Path(run_dir)
    manifest = read_json(run_dir / "pool.json")
    version = manifest.get("formatVersion")
    if version != POOL_FORMAT_VERSION:
        raise ContainerError(f"pool.json: unsupported formatVersion {version!r}")

    def _read(rec: dict) -> Checkpoint:
        path = run_dir / rec["file"]
        if sha256_file(path) != rec["sha256"]:
            raise ContainerError(f"{path}: checkpoint bytes do not match pool.json hash")
        return load_checkpoint(path)

    source = _read(manifest["source"])
    entries = [
        PoolEntry(
            model_id=rec["modelId"],
            relation=rec["relation"],
            role=rec["role"],
            task_id=rec["taskId"],
            checkpoint=_read(rec),
        )
        for rec in manifest["entries"]
    ]
    return ModelPool(source=source, entries=entries)
