"""Behavioral fingerprints for neural model provenance.

Given a source classifier and its training inputs, the toolkit learns a
fragment generator and a pair classifier that together decide whether a
candidate model was fine-tuned from that source, using only the candidate's
input-output behavior.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_run_config, parse_run_config
from .container import ContainerError, UnsupportedVersionError
from .data import LabeledDataset, TaskSplit, make_synthetic_blobs, partition_classes
from .dna import (
    DnaFragment,
    ModelDna,
    assemble_fragment,
    cosine_sim,
    generate_latent,
    generate_model_dna,
    load_fingerprint,
    save_fingerprint,
)
from .engine import (
    EvalReport,
    MgmpConfig,
    MgmpModel,
    ProvenanceVerdict,
    build_mgmp,
    evaluate,
    load_mgmp,
    loss_bce,
    loss_intra,
    loss_similarity,
    loss_total,
    predict_fragment,
    predict_model,
    save_mgmp,
    train_mgmp,
)
from .nets import (
    ArchDescriptor,
    ArchitectureError,
    Checkpoint,
    LayeredModel,
    Lineage,
    TrainConfig,
    build_model,
    evaluate_accuracy,
    flatten_params,
    load_checkpoint,
    mlp_arch,
    model_from_checkpoint,
    replace_last_layers,
    save_checkpoint,
    train,
    unflatten_params,
)
from .pool import (
    ModelPool,
    PoolEntry,
    build_pool,
    load_pool,
    sample_pair,
    save_pool,
    train_homologous,
    train_non_homologous,
    train_source,
)

__all__ = [
    "__version__",
    "ArchDescriptor",
    "ArchitectureError",
    "Checkpoint",
    "ContainerError",
    "DnaFragment",
    "EvalReport",
    "LabeledDataset",
    "LayeredModel",
    "Lineage",
    "MgmpConfig",
    "MgmpModel",
    "ModelDna",
    "ModelPool",
    "PoolEntry",
    "ProvenanceVerdict",
    "RunConfig",
    "TaskSplit",
    "TrainConfig",
    "UnsupportedVersionError",
    "assemble_fragment",
    "build_mgmp",
    "build_model",
    "build_pool",
    "cosine_sim",
    "evaluate",
    "evaluate_accuracy",
    "flatten_params",
    "generate_latent",
    "generate_model_dna",
    "load_checkpoint",
    "load_fingerprint",
    "load_mgmp",
    "load_pool",
    "load_run_config",
    "loss_bce",
    "loss_intra",
    "loss_similarity",
    "loss_total",
    "make_synthetic_blobs",
    "mlp_arch",
    "model_from_checkpoint",
    "parse_run_config",
    "partition_classes",
    "predict_fragment",
    "predict_model",
    "replace_last_layers",
    "sample_pair",
    "save_checkpoint",
    "save_fingerprint",
    "save_mgmp",
    "save_pool",
    "train",
    "train_homologous",
    "train_mgmp",
    "train_non_homologous",
    "train_source",
    "unflatten_params",
]
