"""Labeled datasets, synthetic blob tasks, and disjoint class partitions."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

# Class centers are drawn from N(0, CENTER_SCALE^2) so that `spread` directly
# controls cluster overlap.
CENTER_SCALE = 3.0


@dataclass
class LabeledDataset:
    """Feature matrix plus integer labels for one classification task."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    task_id: str

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        if len(self.features) == 0:
            raise ValueError("dataset must contain at least one sample")
        if self.labels.shape != (len(self.features),):
            raise ValueError(
                f"labels shape {self.labels.shape} does not match "
                f"{len(self.features)} feature rows"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(
                f"labels must lie in [0, {self.num_classes}), "
                f"found range [{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return len(self.features)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def to_csv(self, path: Path | str) -> Path:
        """Export as CSV: feature columns x0..x{d-1}, then integer label."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i}" for i in range(self.feature_dim)] + ["label"])
            for row, label in zip(self.features, self.labels):
                writer.writerow([repr(float(v)) for v in row] + [int(label)])
        return path


@dataclass
class TaskSplit:
    """Disjoint class groups over a parent dataset with per-group label remaps."""

    groups: list[list[int]]
    remaps: list[dict[int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for group in self.groups:
            overlap = seen.intersection(group)
            if overlap:
                raise ValueError(f"class groups overlap on ids {sorted(overlap)}")
            seen.update(group)
        for group, remap in zip(self.groups, self.remaps):
            if sorted(remap.keys()) != sorted(group):
                raise ValueError("remap keys must be exactly the group's class ids")
            if sorted(remap.values()) != list(range(len(group))):
                raise ValueError("remap must be a bijection onto [0, group size)")


def make_synthetic_blobs(
    num_classes: int,
    per_class: int,
    dim: int,
    spread: float,
    seed: int,
    task_id: str | None = None,
) -> LabeledDataset:
    """Balanced Gaussian clusters with deterministically seeded centers."""
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, CENTER_SCALE, size=(num_classes, dim))
    features = np.concatenate(
        [c + rng.normal(0.0, spread, size=(per_class, dim)) for c in centers]
    )
    labels = np.repeat(np.arange(num_classes), per_class)
    order = rng.permutation(len(labels))
    return LabeledDataset(
        features=features[order].astype(np.float32),
        labels=labels[order],
        num_classes=num_classes,
        task_id=task_id or f"blobs{num_classes}x{per_class}d{dim}s{seed}",
    )


def partition_classes(
    parent: LabeledDataset, group_sizes: Sequence[int], seed: int
) -> tuple[TaskSplit, list[LabeledDataset]]:
    """Split a parent dataset into disjoint class-group subtasks.

    Groups are carved from a seeded shuffle of the parent's class ids; each
    subtask keeps exactly the samples of its classes with labels remapped to
    [0, group size). The chosen class ids per group are recorded in the
    returned TaskSplit so split lists can be logged verbatim.
    """
    if any(size < 1 for size in group_sizes):
        raise ValueError("group sizes must be positive")
    if sum(group_sizes) > parent.num_classes:
        raise ValueError(
            f"group sizes sum to {sum(group_sizes)} but parent has only "
            f"{parent.num_classes} classes"
        )
    rng = np.random.default_rng(seed)
    shuffled = [int(c) for c in rng.permutation(parent.num_classes)]
    groups: list[list[int]] = []
    remaps: list[dict[int, int]] = []
    datasets: list[LabeledDataset] = []
    cursor = 0
    for gi, size in enumerate(group_sizes):
        group = shuffled[cursor : cursor + size]
        cursor += size
        remap = {cls: new for new, cls in enumerate(group)}
        mask = np.isin(parent.labels, group)
        labels = np.array([remap[int(c)] for c in parent.labels[mask]], dtype=np.int64)
        datasets.append(
            LabeledDataset(
                features=parent.features[mask].copy(),
                labels=labels,
                num_classes=size,
                task_id=f"{parent.task_id}/g{gi}",
            )
        )
        groups.append(group)
        remaps.append(remap)
    return TaskSplit(groups=groups, remaps=remaps), datasets
