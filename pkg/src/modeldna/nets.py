"""Small layered classifiers: build, train, evaluate, serialize, edit.

Everything downstream (source/target models, the DNA generator, and the
provenance classifier) is a ``LayeredModel``: a seeded stack of dense/conv
layers with optional ReLU, dropout, and a softmax or sigmoid head. Models
compute in float32; persisted parameters are float32 little-endian.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import torch
from torch import nn

from .container import (
    ContainerError,
    UnsupportedVersionError,
    container_bytes,
    read_container,
    write_container,
)
from .data import LabeledDataset
from .util import sha256_hex

CHECKPOINT_FORMAT_VERSION = 1

PARAMETERIZED_KINDS = ("dense", "conv")
HEAD_KINDS = ("softmax", "sigmoid")


class ArchitectureError(ValueError):
    """Raised for dimensionally inconsistent or malformed architectures."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: tuple[tuple[str, Any], ...] = ()

    def get(self, key: str) -> Any:
        return dict(self.params)[key]

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, **dict(self.params)}

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "LayerSpec":
        params = tuple(sorted((k, v) for k, v in obj.items() if k != "kind"))
        return LayerSpec(kind=obj["kind"], params=params)


def dense(in_features: int, out_features: int) -> LayerSpec:
    return LayerSpec("dense", (("inFeatures", in_features), ("outFeatures", out_features)))


def conv(in_channels: int, out_channels: int, kernel_size: int) -> LayerSpec:
    return LayerSpec(
        "conv",
        (("inChannels", in_channels), ("kernelSize", kernel_size), ("outChannels", out_channels)),
    )


def relu() -> LayerSpec:
    return LayerSpec("relu")


def dropout(rate: float = 0.1) -> LayerSpec:
    return LayerSpec("dropout", (("rate", rate),))


def softmax() -> LayerSpec:
    return LayerSpec("softmax")


def sigmoid() -> LayerSpec:
    return LayerSpec("sigmoid")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


@dataclass(frozen=True)
class ArchDescriptor:
    """Ordered layer specs plus the input shape and output width they imply."""

    layer_specs: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]
    num_classes: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_specs", tuple(self.layer_specs))
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        self.validate()

    def validate(self) -> None:
        if self.num_classes < 1:
            raise ArchitectureError("num_classes must be positive")
        if not self.layer_specs:
            raise ArchitectureError("architecture needs at least one layer")
        shape = self.input_shape
        last = len(self.layer_specs) - 1
        for i, spec in enumerate(self.layer_specs):
            if spec.kind == "dense":
                if len(shape) != 1:
                    raise ArchitectureError(
                        f"layer {i} (dense) needs a flat input, current shape {shape}"
                    )
                if shape[0] != spec.get("inFeatures"):
                    raise ArchitectureError(
                        f"layer {i} (dense) expects {spec.get('inFeatures')} inputs "
                        f"but the previous layer produces {shape[0]}"
                    )
                shape = (spec.get("outFeatures"),)
            elif spec.kind == "conv":
                if len(shape) != 3:
                    raise ArchitectureError(
                        f"layer {i} (conv) needs a (C, H, W) input, current shape {shape}"
                    )
                c, h, w = shape
                k = spec.get("kernelSize")
                if c != spec.get("inChannels"):
                    raise ArchitectureError(
                        f"layer {i} (conv) expects {spec.get('inChannels')} channels, got {c}"
                    )
                if h < k or w < k:
                    raise ArchitectureError(
                        f"layer {i} (conv) kernel {k} exceeds spatial size {(h, w)}"
                    )
                shape = (spec.get("outChannels"), h - k + 1, w - k + 1)
            elif spec.kind == "flatten":
                shape = (int(np.prod(shape)),)
            elif spec.kind == "dropout":
                rate = spec.get("rate")
                if not 0.0 <= rate < 1.0:
                    raise ArchitectureError(f"layer {i} dropout rate {rate} out of [0, 1)")
            elif spec.kind == "relu":
                pass
            elif spec.kind in HEAD_KINDS:
                if i != last:
                    raise ArchitectureError(f"{spec.kind} is only allowed as the final layer")
                if len(shape) != 1:
                    raise ArchitectureError(f"{spec.kind} head needs a flat input, got {shape}")
            else:
                raise ArchitectureError(f"unknown layer kind {spec.kind!r}")
        if len(shape) != 1 or shape[0] != self.num_classes:
            raise ArchitectureError(
                f"architecture produces shape {shape} but num_classes={self.num_classes}"
            )

    @property
    def parameterized_layer_count(self) -> int:
        return sum(1 for s in self.layer_specs if s.kind in PARAMETERIZED_KINDS)

    @property
    def has_softmax_head(self) -> bool:
        return self.layer_specs[-1].kind == "softmax"

    def to_json(self) -> dict[str, Any]:
        return {
            "inputShape": list(self.input_shape),
            "numClasses": self.num_classes,
            "layers": [s.to_json() for s in self.layer_specs],
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "ArchDescriptor":
        return ArchDescriptor(
            layer_specs=tuple(LayerSpec.from_json(l) for l in obj["layers"]),
            input_shape=tuple(obj["inputShape"]),
            num_classes=int(obj["numClasses"]),
        )


def mlp_arch(
    input_dim: int,
    hidden: Sequence[int],
    out_dim: int,
    head: str | None = "softmax",
    dropout_rate: float = 0.0,
) -> ArchDescriptor:
    """Dense MLP: dense(+relu+dropout) per hidden width, dense head, optional softmax/sigmoid."""
    specs: list[LayerSpec] = []
    prev = input_dim
    for width in hidden:
        specs.append(dense(prev, width))
        specs.append(relu())
        if dropout_rate > 0.0:
            specs.append(dropout(dropout_rate))
        prev = width
    specs.append(dense(prev, out_dim))
    if head is not None:
        if head not in HEAD_KINDS:
            raise ArchitectureError(f"unknown head {head!r}")
        specs.append(LayerSpec(head))
    return ArchDescriptor(tuple(specs), (input_dim,), out_dim)


def _init_uniform(tensor: torch.Tensor, fan_in: int, gen: torch.Generator) -> None:
    bound = 1.0 / math.sqrt(fan_in) if fan_in > 0 else 0.0
    with torch.no_grad():
        tensor.uniform_(-bound, bound, generator=gen)


class LayeredModel(nn.Module):
    """A seeded layer stack. Eval mode is a pure function of (params, input).

    ``forward`` accepts single samples or batches, as torch tensors or numpy
    arrays, and returns the matching kind. For softmax-headed architectures
    the result rows are class probabilities; ``logits`` skips the head.
    """

    def __init__(self, arch: ArchDescriptor, seed: int):
        super().__init__()
        self.arch = arch
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        modules: list[nn.Module] = []
        for spec in arch.layer_specs:
            if spec.kind == "dense":
                layer = nn.Linear(spec.get("inFeatures"), spec.get("outFeatures"))
                _init_uniform(layer.weight, spec.get("inFeatures"), gen)
                _init_uniform(layer.bias, spec.get("inFeatures"), gen)
                modules.append(layer)
            elif spec.kind == "conv":
                k = spec.get("kernelSize")
                layer = nn.Conv2d(spec.get("inChannels"), spec.get("outChannels"), k)
                fan_in = spec.get("inChannels") * k * k
                _init_uniform(layer.weight, fan_in, gen)
                _init_uniform(layer.bias, fan_in, gen)
                modules.append(layer)
            elif spec.kind == "relu":
                modules.append(nn.ReLU())
            elif spec.kind == "dropout":
                modules.append(nn.Dropout(spec.get("rate")))
            elif spec.kind == "softmax":
                modules.append(nn.Softmax(dim=-1))
            elif spec.kind == "sigmoid":
                modules.append(nn.Sigmoid())
            elif spec.kind == "flatten":
                modules.append(nn.Flatten())
            else:  # pragma: no cover - validate() rejects these
                raise ArchitectureError(f"unknown layer kind {spec.kind!r}")
        self.layers = nn.ModuleList(modules)

    def _prepare(self, x: Any) -> tuple[torch.Tensor, bool, bool]:
        was_numpy = isinstance(x, np.ndarray)
        t = torch.as_tensor(x, dtype=next(self.parameters()).dtype)
        expected = self.arch.input_shape
        if t.shape == torch.Size(expected):
            return t.unsqueeze(0), was_numpy, True
        if t.ndim == len(expected) + 1 and tuple(t.shape[1:]) == expected:
            return t, was_numpy, False
        raise ValueError(
            f"expected input shaped {expected} or (batch, *{expected}), "
            f"received {tuple(t.shape)}"
        )

    def _run(self, t: torch.Tensor, skip_head: bool) -> torch.Tensor:
        stack = self.layers[:-1] if skip_head else self.layers
        for layer in stack:
            t = layer(t)
        return t

    def _call(self, x: Any, skip_head: bool) -> Any:
        t, was_numpy, single = self._prepare(x)
        out = self._run(t, skip_head)
        if single:
            out = out.squeeze(0)
        if was_numpy:
            return out.detach().cpu().numpy()
        return out

    def forward(self, x: Any) -> Any:
        return self._call(x, skip_head=False)

    def logits(self, x: Any) -> Any:
        """Pre-head output: identical to forward when there is no softmax/sigmoid head."""
        return self._call(x, skip_head=self.arch.layer_specs[-1].kind in HEAD_KINDS)

    def parameterized_modules(self) -> list[nn.Module]:
        return [m for m in self.layers if isinstance(m, (nn.Linear, nn.Conv2d))]

    def param_arrays(self) -> dict[str, np.ndarray]:
        """Ordered name -> float32 array snapshot of all parameters."""
        return {
            name: p.detach().cpu().numpy().astype(np.float32, copy=True)
            for name, p in self.named_parameters()
        }


def build_model(arch: ArchDescriptor, seed: int) -> LayeredModel:
    """Deterministically seeded random-initialized model in train mode."""
    model = LayeredModel(arch, seed)
    model.train()
    return model


def param_count(model: LayeredModel) -> int:
    return sum(p.numel() for p in model.parameters())


def flatten_params(model: LayeredModel) -> np.ndarray:
    """All parameters as one float32 vector; order is the module order."""
    if param_count(model) == 0:
        return np.zeros(0, dtype=np.float32)
    return np.concatenate(
        [p.detach().cpu().numpy().astype(np.float32).ravel() for p in model.parameters()]
    )


def unflatten_params(model: LayeredModel, vector: np.ndarray) -> LayeredModel:
    """Inverse of flatten_params; restores parameters in place."""
    vector = np.asarray(vector, dtype=np.float32)
    if vector.shape != (param_count(model),):
        raise ValueError(
            f"expected a vector of length {param_count(model)}, got shape {vector.shape}"
        )
    cursor = 0
    with torch.no_grad():
        for p in model.parameters():
            n = p.numel()
            chunk = vector[cursor : cursor + n].reshape(tuple(p.shape))
            p.copy_(torch.as_tensor(chunk, dtype=p.dtype))
            cursor += n
    return model


def replace_last_layers(
    target: LayeredModel, source: LayeredModel, k: int
) -> LayeredModel:
    """New model: source's last ``k`` parameterized layers over the target's rest.

    Only weight-bearing layers (dense/conv) count toward ``k``; activations and
    dropout travel with their preceding layer. Inputs are not mutated.
    """
    if target.arch != source.arch:
        raise ArchitectureError("target and source must share the same architecture")
    total = target.arch.parameterized_layer_count
    if not 0 <= k <= total:
        raise ValueError(f"k={k} out of range [0, {total}]")
    merged = copy.deepcopy(target)
    merged_mods = merged.parameterized_modules()
    source_mods = source.parameterized_modules()
    with torch.no_grad():
        for dst, src in zip(merged_mods[total - k :], source_mods[total - k :]):
            dst.weight.copy_(src.weight)
            dst.bias.copy_(src.bias)
    return merged


@dataclass
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not (0 <= self.adam_betas[0] < 1 and 0 <= self.adam_betas[1] < 1):
            raise ValueError("adam_betas must lie in [0, 1)")


def train(
    model: LayeredModel, data: LabeledDataset, cfg: TrainConfig
) -> tuple[LayeredModel, list[float]]:
    """Adam + cross-entropy training; returns the model and per-epoch mean loss.

    Deterministic given (model params, data, cfg.seed): the global torch RNG is
    reseeded here, so each training run owns its randomness.
    """
    if data.num_classes != model.arch.num_classes:
        raise ValueError(
            f"dataset has {data.num_classes} classes but the model outputs "
            f"{model.arch.num_classes}"
        )
    torch.manual_seed(cfg.seed)
    perm_gen = torch.Generator().manual_seed(cfg.seed)
    features = torch.as_tensor(data.features, dtype=torch.float32)
    labels = torch.as_tensor(data.labels, dtype=torch.long)
    if len(model.arch.input_shape) > 1:
        features = features.reshape(-1, *model.arch.input_shape)
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=cfg.learning_rate,
        betas=cfg.adam_betas,
        eps=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
    )
    history: list[float] = []
    model.train()
    for _ in range(cfg.epochs):
        order = torch.randperm(len(features), generator=perm_gen)
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            optimizer.zero_grad()
            out = model.logits(features[idx])
            loss = nn.functional.cross_entropy(out, labels[idx])
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item() * len(idx)
        history.append(epoch_loss / len(features))
    model.eval()
    return model, history


def evaluate_accuracy(model: LayeredModel, data: LabeledDataset) -> float:
    """Classification accuracy in eval mode."""
    was_training = model.training
    model.eval()
    with torch.no_grad():
        features = torch.as_tensor(data.features, dtype=torch.float32)
        if len(model.arch.input_shape) > 1:
            features = features.reshape(-1, *model.arch.input_shape)
        preds = model.forward(features).argmax(dim=-1).cpu().numpy()
    if was_training:
        model.train()
    return float(np.mean(preds == data.labels))


@dataclass
class Lineage:
    init_from: str | None
    trained_on_task_id: str
    seed: int

    def to_json(self) -> dict[str, Any]:
        return {
            "initFrom": self.init_from,
            "trainedOnTaskId": self.trained_on_task_id,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(obj: dict[str, Any]) -> "Lineage":
        return Lineage(
            init_from=obj["initFrom"],
            trained_on_task_id=obj["trainedOnTaskId"],
            seed=int(obj["seed"]),
        )


@dataclass
class Checkpoint:
    """Serializable parameter snapshot with lineage metadata."""

    checkpoint_id: str
    arch: ArchDescriptor
    params: dict[str, np.ndarray]
    lineage: Lineage
    metrics: dict[str, float] | None = None
    format_version: int = CHECKPOINT_FORMAT_VERSION

    def content_hash(self) -> str:
        return sha256_hex(checkpoint_bytes(self))


def checkpoint_from_model(
    model: LayeredModel,
    checkpoint_id: str,
    lineage: Lineage,
    metrics: dict[str, float] | None = None,
) -> Checkpoint:
    return Checkpoint(
        checkpoint_id=checkpoint_id,
        arch=model.arch,
        params=model.param_arrays(),
        lineage=lineage,
        metrics=metrics,
    )


def model_from_checkpoint(ckpt: Checkpoint) -> LayeredModel:
    """Rebuild an eval-mode model carrying the checkpoint's exact parameters."""
    model = LayeredModel(ckpt.arch, seed=0)
    expected = [name for name, _ in model.named_parameters()]
    if list(ckpt.params.keys()) != expected:
        raise ContainerError(
            f"checkpoint '{ckpt.checkpoint_id}' parameter names do not match its arch"
        )
    with torch.no_grad():
        for name, p in model.named_parameters():
            arr = ckpt.params[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise ContainerError(
                    f"checkpoint '{ckpt.checkpoint_id}' param {name} has shape "
                    f"{arr.shape}, arch implies {tuple(p.shape)}"
                )
            p.copy_(torch.as_tensor(arr, dtype=p.dtype))
    model.eval()
    return model


def _checkpoint_header(ckpt: Checkpoint) -> dict[str, Any]:
    return {
        "formatVersion": ckpt.format_version,
        "checkpointId": ckpt.checkpoint_id,
        "arch": ckpt.arch.to_json(),
        "lineage": ckpt.lineage.to_json(),
        "metrics": ckpt.metrics,
    }


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    return container_bytes(_checkpoint_header(ckpt), list(ckpt.params.items()))


def save_checkpoint(ckpt: Checkpoint, path: Path | str) -> str:
    """Write the checkpoint container; returns its content hash."""
    data = write_container(path, _checkpoint_header(ckpt), list(ckpt.params.items()))
    return sha256_hex(data)


def load_checkpoint(path: Path | str) -> Checkpoint:
    header, arrays = read_container(path)
    version = header.get("formatVersion")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: unsupported checkpoint formatVersion {version!r} "
            f"(this build reads version {CHECKPOINT_FORMAT_VERSION})"
        )
    try:
        return Checkpoint(
            checkpoint_id=header["checkpointId"],
            arch=ArchDescriptor.from_json(header["arch"]),
            params=arrays,
            lineage=Lineage.from_json(header["lineage"]),
            metrics=header.get("metrics"),
        )
    except (KeyError, TypeError) as exc:
        raise ContainerError(f"{path}: malformed checkpoint header: {exc}") from exc
