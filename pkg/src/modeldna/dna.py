"""Fragment generation and assembly: a model's behavioral fingerprint.

Each source-task input x_i yields one fragment: the generator's latent for
x_i combined with the probed model's output on x_i, either by elementwise
addition (latent width must equal the class count) or by concatenation. The
ordered fragment set is the model's DNA for that input collection.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import torch

from .container import (
    ContainerError,
    UnsupportedVersionError,
    container_bytes,
    read_container,
    write_container,
)
from .data import LabeledDataset
from .nets import LayeredModel
from .util import sha256_hex

ASSEMBLY_ADDITION = "addition"
ASSEMBLY_CONCAT = "concat"
ASSEMBLY_MODES = (ASSEMBLY_ADDITION, ASSEMBLY_CONCAT)

FINGERPRINT_FORMAT_VERSION = 1


def cosine_sim(u: Any, v: Any) -> float:
    """Cosine similarity of two vectors; zero-norm inputs are rejected."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ValueError(f"vectors differ in length: {u.shape[0]} vs {v.shape[0]}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity is undefined for zero-norm vectors")
    return float(np.dot(u, v) / (nu * nv))


def assemble_fragment(z: Any, y: Any, mode: str = ASSEMBLY_ADDITION) -> Any:
    """Combine latent z with model output y; works on 1-D vectors or 2-D batches.

    Torch inputs stay torch (gradients flow through), everything else is numpy.
    """
    if mode not in ASSEMBLY_MODES:
        raise ValueError(f"unknown assembly mode {mode!r}")
    torch_path = torch.is_tensor(z) and torch.is_tensor(y)
    if not torch_path:
        z = np.asarray(z, dtype=np.float32)
        y = np.asarray(y, dtype=np.float32)
    if z.ndim != y.ndim or z.ndim not in (1, 2):
        raise ValueError(f"z and y must both be 1-D or 2-D, got {z.ndim}-D and {y.ndim}-D")
    if z.ndim == 2 and z.shape[0] != y.shape[0]:
        raise ValueError(f"batch sizes differ: {z.shape[0]} vs {y.shape[0]}")
    if mode == ASSEMBLY_ADDITION:
        if z.shape[-1] != y.shape[-1]:
            raise ValueError(
                f"addition assembly needs matching widths, got latent {z.shape[-1]} "
                f"and output {y.shape[-1]}"
            )
        return z + y
    if torch_path:
        return torch.cat([z, y], dim=-1)
    return np.concatenate([z, y], axis=-1)


def fragment_width(latent_dim: int, num_classes: int, mode: str) -> int:
    if mode == ASSEMBLY_ADDITION:
        if latent_dim != num_classes:
            raise ValueError(
                f"addition assembly needs latent width {num_classes} to match the "
                f"class count, got {latent_dim}"
            )
        return latent_dim
    if mode == ASSEMBLY_CONCAT:
        return latent_dim + num_classes
    raise ValueError(f"unknown assembly mode {mode!r}")


def generate_latent(generator: LayeredModel, x: Any) -> Any:
    """The generator's latent code for x (its plain forward pass)."""
    return generator.forward(x)


def generator_version_hash(generator: LayeredModel) -> str:
    """Content hash of the generator's architecture and exact parameters."""
    header = {"arch": generator.arch.to_json()}
    return sha256_hex(container_bytes(header, list(generator.param_arrays().items())))


@dataclass(frozen=True)
class DnaFragment:
    vector: np.ndarray
    source_input_index: int
    model_id: str
    assembly_mode: str

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float32)
        if vec.ndim != 1:
            raise ValueError(f"fragment vector must be 1-D, got shape {vec.shape}")
        object.__setattr__(self, "vector", vec)
        if self.assembly_mode not in ASSEMBLY_MODES:
            raise ValueError(f"unknown assembly mode {self.assembly_mode!r}")
        if self.source_input_index < 0:
            raise ValueError("source_input_index must be non-negative")


@dataclass
class ModelDna:
    """One fragment per source input, in dataset order."""

    model_id: str
    assembly_mode: str
    generator_version_hash: str
    fragments: list[DnaFragment]

    def __post_init__(self) -> None:
        if not self.fragments:
            raise ValueError("a DNA needs at least one fragment")
        widths = {f.vector.shape[0] for f in self.fragments}
        if len(widths) != 1:
            raise ValueError(f"fragments disagree on width: {sorted(widths)}")
        for pos, frag in enumerate(self.fragments):
            if frag.source_input_index != pos:
                raise ValueError(
                    f"fragment {pos} carries source_input_index {frag.source_input_index}; "
                    "fragments must follow dataset order"
                )
            if frag.model_id != self.model_id:
                raise ValueError(
                    f"fragment {pos} belongs to {frag.model_id!r}, not {self.model_id!r}"
                )
            if frag.assembly_mode != self.assembly_mode:
                raise ValueError("fragments disagree on assembly mode")

    def __len__(self) -> int:
        return len(self.fragments)

    @property
    def fragment_width(self) -> int:
        return self.fragments[0].vector.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """All fragments stacked to an (N, width) float32 matrix."""
        return np.stack([f.vector for f in self.fragments]).astype(np.float32)


def dna_from_matrix(
    matrix: np.ndarray, model_id: str, assembly_mode: str, gen_hash: str
) -> ModelDna:
    matrix = np.asarray(matrix, dtype=np.float32)
    if matrix.ndim != 2:
        raise ValueError(f"fragment matrix must be 2-D, got shape {matrix.shape}")
    fragments = [
        DnaFragment(matrix[i], i, model_id, assembly_mode) for i in range(matrix.shape[0])
    ]
    return ModelDna(model_id, assembly_mode, gen_hash, fragments)


def generate_model_dna(
    generator: LayeredModel,
    model: LayeredModel,
    data: LabeledDataset,
    model_id: str,
    mode: str = ASSEMBLY_ADDITION,
    output_kind: str = "probabilities",
) -> ModelDna:
    """DNA of ``model`` over the dataset's inputs: one fragment per sample.

    ``output_kind`` selects what the probed model contributes: its softmax
    probabilities (default) or its pre-head scores.
    """
    if output_kind not in ("probabilities", "logits"):
        raise ValueError(f"unknown output kind {output_kind!r}")
    fragment_width(generator.arch.num_classes, model.arch.num_classes, mode)
    generator.eval()
    model.eval()
    with torch.no_grad():
        z = generate_latent(generator, data.features)
        y = model.forward(data.features) if output_kind == "probabilities" else model.logits(data.features)
    matrix = assemble_fragment(z, y, mode)
    return dna_from_matrix(matrix, model_id, mode, generator_version_hash(generator))


def _fingerprint_header(dna: ModelDna) -> dict:
    return {
        "formatVersion": FINGERPRINT_FORMAT_VERSION,
        "modelId": dna.model_id,
        "assemblyMode": dna.assembly_mode,
        "fragmentWidth": dna.fragment_width,
        "numFragments": len(dna),
        "generatorVersionHash": dna.generator_version_hash,
    }


def save_fingerprint(dna: ModelDna, path: Path | str) -> str:
    """Write the fingerprint container; returns its content hash."""
    data = write_container(path, _fingerprint_header(dna), [("fragments", dna.matrix)])
    return sha256_hex(data)


def load_fingerprint(path: Path | str) -> ModelDna:
    header, arrays = read_container(path)
    version = header.get("formatVersion")
    if version != FINGERPRINT_FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: unsupported fingerprint formatVersion {version!r} "
            f"(this build reads version {FINGERPRINT_FORMAT_VERSION})"
        )
    try:
        matrix = arrays["fragments"]
        dna = dna_from_matrix(
            matrix, header["modelId"], header["assemblyMode"], header["generatorVersionHash"]
        )
    except (KeyError, ValueError) as exc:
        raise ContainerError(f"{path}: malformed fingerprint: {exc}") from exc
    if matrix.shape != (header["numFragments"], header["fragmentWidth"]):
        raise ContainerError(
            f"{path}: fragment matrix shape {matrix.shape} disagrees with header "
            f"({header['numFragments']}, {header['fragmentWidth']})"
        )
    return dna
