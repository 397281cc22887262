"""Contrastive fingerprint training and provenance verdicts.

The engine trains two small nets against a frozen model pool: a generator
that maps source-task inputs to latent codes, and a classifier that scores
fragment pairs. The combined objective pulls a source fragment toward the
fragment of a model fine-tuned from that source, pushes it away from
unrelated models' fragments, rewards cohesion among the fragments of each
single model, and trains the pair classifier with balanced binary
cross-entropy.

Loss functions accept numpy arrays (computed in float64, returned as float)
or torch tensors (dtype preserved, gradients flow). Sums follow the set
definitions exactly: similarity and intra terms are sums over the batch, not
means, and the intra term runs over ordered index pairs i != k.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import torch

from .container import ContainerError
from .data import LabeledDataset
from .dna import (
    ASSEMBLY_ADDITION,
    ASSEMBLY_MODES,
    ModelDna,
    assemble_fragment,
    fragment_width,
    generate_model_dna,
    generator_version_hash,
)
from .nets import (
    Checkpoint,
    LayeredModel,
    Lineage,
    checkpoint_from_model,
    flatten_params,
    load_checkpoint,
    mlp_arch,
    model_from_checkpoint,
    save_checkpoint,
)
from .pool import ROLE_EVAL, RELATION_HOMOLOGOUS, ModelPool, sample_pair
from .util import derive_seed, read_json, write_json

MGMP_FORMAT_VERSION = 1
REPORT_FORMAT_VERSION = 1

MODEL_OUTPUT_KINDS = ("probabilities", "logits")
DEFAULT_DELTA_SWEEP = (0.5, 0.7, 0.9, 0.95)

BCE_CLAMP = 1e-7


@dataclass
class MgmpConfig:
    """Knobs for fingerprint training and the set-level decision rule."""

    tau: float = 0.5
    delta: float = 0.9
    assembly_mode: str = ASSEMBLY_ADDITION
    model_output: str = "probabilities"
    include_positive_in_denominator: bool = False
    generator_enabled: bool = True
    sim_weight: float = 1.0
    bce_weight: float = 1.0
    generator_norm_weight: float = 1e-4
    generator_hidden: tuple[int, ...] = (64, 64)
    classifier_hidden: tuple[int, ...] = (64, 32)
    dropout_rate: float = 0.1
    latent_dim: int | None = None
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 8
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if self.assembly_mode not in ASSEMBLY_MODES:
            raise ValueError(f"unknown assembly mode {self.assembly_mode!r}")
        if self.model_output not in MODEL_OUTPUT_KINDS:
            raise ValueError(f"model_output must be one of {MODEL_OUTPUT_KINDS}")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if min(self.sim_weight, self.bce_weight, self.generator_norm_weight) < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.latent_dim is not None and self.latent_dim < 1:
            raise ValueError("latent_dim must be positive when given")
        self.generator_hidden = tuple(self.generator_hidden)
        self.classifier_hidden = tuple(self.classifier_hidden)
        self.adam_betas = tuple(self.adam_betas)

    _JSON_KEYS = {
        "tau": "tau",
        "delta": "delta",
        "assembly_mode": "assemblyMode",
        "model_output": "modelOutput",
        "include_positive_in_denominator": "includePositiveInDenominator",
        "generator_enabled": "generatorEnabled",
        "sim_weight": "simWeight",
        "bce_weight": "bceWeight",
        "generator_norm_weight": "generatorNormWeight",
        "generator_hidden": "generatorHidden",
        "classifier_hidden": "classifierHidden",
        "dropout_rate": "dropoutRate",
        "latent_dim": "latentDim",
        "learning_rate": "learningRate",
        "epochs": "epochs",
        "batch_size": "batchSize",
        "adam_betas": "adamBetas",
        "adam_eps": "adamEps",
        "seed": "seed",
    }

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[self._JSON_KEYS[f.name]] = value
        return out

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "MgmpConfig":
        reverse = {camel: snake for snake, camel in cls._JSON_KEYS.items()}
        unknown = set(obj) - set(reverse)
        if unknown:
            raise ValueError(f"unknown MGMP config keys: {sorted(unknown)}")
        return cls(**{reverse[k]: v for k, v in obj.items()})


def _loss_inputs(
    o_s: Any, o_t: Any, o_bar: Any
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, bool]:
    torch_in = torch.is_tensor(o_s) and torch.is_tensor(o_t) and torch.is_tensor(o_bar)
    if torch_in:
        ts = (o_s, o_t, o_bar)
    else:
        ts = tuple(
            torch.as_tensor(np.asarray(a, dtype=np.float64)) for a in (o_s, o_t, o_bar)
        )
    shapes = {tuple(t.shape) for t in ts}
    if len(shapes) != 1:
        raise ValueError(f"fragment sets disagree on shape: {sorted(shapes)}")
    if ts[0].ndim != 2 or ts[0].shape[0] < 1 or ts[0].shape[1] < 1:
        raise ValueError(
            f"fragment sets must be (N, width) matrices with N >= 1, got {tuple(ts[0].shape)}"
        )
    return ts[0], ts[1], ts[2], torch_in


def _unit_rows(mat: torch.Tensor) -> torch.Tensor:
    norms = mat.norm(dim=-1, keepdim=True)
    if bool((norms == 0).any()):
        raise ValueError("cosine similarity is undefined for zero-norm fragments")
    return mat / norms


def loss_similarity(
    o_s: Any,
    o_t: Any,
    o_bar: Any,
    tau: float,
    include_positive_in_denominator: bool = False,
) -> Any:
    """Contrastive pull of each source fragment toward its fine-tuned twin.

    Per row i the positive is sim(o_s[i], o_t[i]); the denominator sums the
    exponentiated similarities of o_s[i] to every unrelated fragment. The
    positive pair joins the denominator only when the flag says so, so with
    the default the value can go negative once positives dominate negatives.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    s, t, bar, torch_in = _loss_inputs(o_s, o_t, o_bar)
    s_n, t_n, bar_n = _unit_rows(s), _unit_rows(t), _unit_rows(bar)
    pos = (s_n * t_n).sum(dim=-1) / tau
    neg = (s_n @ bar_n.T) / tau
    if include_positive_in_denominator:
        neg = torch.cat([neg, pos.unsqueeze(1)], dim=1)
    total = (torch.logsumexp(neg, dim=1) - pos).sum()
    return total if torch_in else float(total.item())


def loss_intra(o_s: Any, o_t: Any, o_bar: Any, tau: float) -> Any:
    """Within-set cohesion term over ordered pairs i != k.

    Each pair contributes -log of the summed exponentiated within-set
    similarities across the three sets, so minimizing it drives fragments of
    the same model toward one another. A single-fragment batch has no pairs
    and scores zero.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    s, t, bar, torch_in = _loss_inputs(o_s, o_t, o_bar)
    n = s.shape[0]
    if n == 1:
        zero = s.sum() * 0.0
        return zero if torch_in else 0.0
    s_n, t_n, bar_n = _unit_rows(s), _unit_rows(t), _unit_rows(bar)
    stacked = torch.stack([s_n @ s_n.T, t_n @ t_n.T, bar_n @ bar_n.T]) / tau
    per_pair = torch.logsumexp(stacked, dim=0)
    off_diag = ~torch.eye(n, dtype=torch.bool)
    total = -per_pair[off_diag].sum()
    return total if torch_in else float(total.item())


def generator_weight_norm(generator: LayeredModel) -> torch.Tensor:
    """Plain (unsquared) l2 norm of all generator parameters, flattened."""
    return torch.cat([p.reshape(-1) for p in generator.parameters()]).norm(p=2)


def loss_total(
    o_s: Any, o_t: Any, o_bar: Any, cfg: MgmpConfig, generator: LayeredModel | None = None
) -> Any:
    """Similarity + intra terms plus the weighted generator norm."""
    sim = loss_similarity(o_s, o_t, o_bar, cfg.tau, cfg.include_positive_in_denominator)
    intra = loss_intra(o_s, o_t, o_bar, cfg.tau)
    total = sim + intra
    if generator is not None and cfg.generator_norm_weight > 0:
        norm = generator_weight_norm(generator)
        if torch.is_tensor(total):
            total = total + cfg.generator_norm_weight * norm
        else:
            total = total + cfg.generator_norm_weight * float(norm.item())
    return total


def loss_bce(scores: Any, labels: Any) -> Any:
    """Mean binary cross-entropy with scores clamped away from 0 and 1."""
    torch_in = torch.is_tensor(scores)
    s = scores if torch_in else torch.as_tensor(np.asarray(scores, dtype=np.float64))
    h = torch.as_tensor(labels, dtype=s.dtype) if not torch.is_tensor(labels) else labels
    h = h.to(s.dtype)
    if s.ndim != 1 or s.shape != h.shape:
        raise ValueError(
            f"scores and labels must be equal-length vectors, got {tuple(s.shape)} "
            f"and {tuple(h.shape)}"
        )
    if s.shape[0] < 1:
        raise ValueError("need at least one scored pair")
    clamped = s.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
    total = -(h * clamped.log() + (1.0 - h) * (1.0 - clamped).log()).mean()
    return total if torch_in else float(total.item())


@dataclass
class MgmpModel:
    """Trained generator + pair classifier plus the config that shaped them."""

    generator: LayeredModel
    classifier: LayeredModel
    config: MgmpConfig
    loss_log: list[dict] = field(default_factory=list)
    source_task_id: str | None = None

    def __post_init__(self) -> None:
        latent = self.generator.arch.num_classes
        clf_in = self.classifier.arch.input_shape[0]
        if self.config.assembly_mode == ASSEMBLY_ADDITION:
            if clf_in != 2 * latent:
                raise ValueError(
                    f"classifier consumes {clf_in} features but two {latent}-wide "
                    "fragments need twice the fragment width"
                )
        else:
            if clf_in % 2 != 0 or clf_in // 2 <= latent:
                raise ValueError(
                    "classifier input width must be twice the concatenated fragment width"
                )

    @property
    def generator_hash(self) -> str:
        return generator_version_hash(self.generator)


def build_mgmp(input_dim: int, num_classes: int, cfg: MgmpConfig) -> MgmpModel:
    """Freshly seeded generator and classifier sized for the given task."""
    latent = cfg.latent_dim if cfg.latent_dim is not None else num_classes
    frag_w = fragment_width(latent, num_classes, cfg.assembly_mode)
    gen_arch = mlp_arch(
        input_dim, cfg.generator_hidden, latent, head=None, dropout_rate=cfg.dropout_rate
    )
    clf_arch = mlp_arch(
        2 * frag_w, cfg.classifier_hidden, 1, head="sigmoid", dropout_rate=cfg.dropout_rate
    )
    generator = LayeredModel(gen_arch, derive_seed(cfg.seed, "mgmp", "generator"))
    classifier = LayeredModel(clf_arch, derive_seed(cfg.seed, "mgmp", "classifier"))
    if not cfg.generator_enabled:
        # the latent contribution is ablated away: a zeroed generator emits
        # exactly zero for every input, so fragments reduce to model outputs
        with torch.no_grad():
            for p in generator.parameters():
                p.zero_()
    generator.train()
    classifier.train()
    return MgmpModel(generator=generator, classifier=classifier, config=cfg)


def _model_outputs(model: LayeredModel, x: torch.Tensor, kind: str) -> torch.Tensor:
    if kind == "probabilities":
        return model.forward(x)
    return model.logits(x)


def train_mgmp(
    pool: ModelPool, source_data: LabeledDataset, cfg: MgmpConfig
) -> MgmpModel:
    """Train generator and classifier against the frozen pool.

    Every mini-batch draws one homologous and one non-homologous pool model,
    assembles the three fragment sets for the batch inputs, and takes a
    single Adam step on the combined weighted objective. Pool and source
    parameters are snapshotted before training and must match bit for bit
    afterwards; any drift raises.
    """
    if len(source_data) < 2:
        raise ValueError("fingerprint training needs at least two source samples")
    torch.manual_seed(cfg.seed)
    pair_rng = np.random.default_rng(derive_seed(cfg.seed, "mgmp", "pairs"))
    perm_gen = torch.Generator().manual_seed(derive_seed(cfg.seed, "mgmp", "batches"))

    source_model = model_from_checkpoint(pool.source)
    pool_models = {e.model_id: e.load_model() for e in pool.entries}
    frozen_before = {"__source__": flatten_params(source_model)}
    frozen_before.update({mid: flatten_params(m) for mid, m in pool_models.items()})

    mgmp = build_mgmp(source_data.feature_dim, source_model.arch.num_classes, cfg)
    mgmp.source_task_id = source_data.task_id
    generator, classifier = mgmp.generator, mgmp.classifier
    trainable = list(classifier.parameters())
    if cfg.generator_enabled:
        trainable = list(generator.parameters()) + trainable
    optimizer = torch.optim.Adam(
        trainable, lr=cfg.learning_rate, betas=cfg.adam_betas, eps=cfg.adam_eps
    )
    x_all = torch.as_tensor(source_data.features, dtype=torch.float32)

    log: list[dict] = []
    for epoch in range(cfg.epochs):
        order = torch.randperm(len(x_all), generator=perm_gen)
        sums: dict[str, float] = defaultdict(float)
        steps = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if len(idx) < 2:
                continue  # a single-sample tail has no contrastive structure
            hom, non = sample_pair(pool, pair_rng)
            x = x_all[idx]
            with torch.no_grad():
                y_s = _model_outputs(source_model, x, cfg.model_output)
                y_t = _model_outputs(pool_models[hom.model_id], x, cfg.model_output)
                y_bar = _model_outputs(pool_models[non.model_id], x, cfg.model_output)
            optimizer.zero_grad()
            z = generator.forward(x)
            if not cfg.generator_enabled:
                z = z.detach()
            o_s = assemble_fragment(z, y_s, cfg.assembly_mode)
            o_t = assemble_fragment(z, y_t, cfg.assembly_mode)
            o_bar = assemble_fragment(z, y_bar, cfg.assembly_mode)
            sim = loss_similarity(o_s, o_t, o_bar, cfg.tau, cfg.include_positive_in_denominator)
            intra = loss_intra(o_s, o_t, o_bar, cfg.tau)
            if cfg.generator_enabled:
                norm = generator_weight_norm(generator)
            else:
                # the l2 norm of an all-zero generator has no useful gradient
                norm = torch.zeros(())
            pairs = torch.cat([torch.cat([o_s, o_t], 1), torch.cat([o_s, o_bar], 1)], 0)
            labels = torch.cat([torch.ones(len(idx)), torch.zeros(len(idx))])
            scores = classifier.forward(pairs).squeeze(-1)
            bce = loss_bce(scores, labels)
            sim_part = sim + intra + cfg.generator_norm_weight * norm
            total = cfg.sim_weight * sim_part + cfg.bce_weight * bce
            total.backward()
            optimizer.step()
            for key, value in (
                ("total", total),
                ("similarity", sim),
                ("intra", intra),
                ("generatorNorm", norm),
                ("bce", bce),
            ):
                sums[key] += float(value.item())
            steps += 1
        if steps:
            log.append({"epoch": epoch, **{k: v / steps for k, v in sums.items()}})
    generator.eval()
    classifier.eval()

    frozen_after = {"__source__": flatten_params(source_model)}
    frozen_after.update({mid: flatten_params(m) for mid, m in pool_models.items()})
    for mid, before in frozen_before.items():
        if not np.array_equal(before, frozen_after[mid]):
            raise RuntimeError(
                f"pool model {mid} changed during fingerprint training; "
                "probed models must stay frozen"
            )
    mgmp.loss_log = log
    return mgmp


def predict_fragments(mgmp: MgmpModel, source_frags: Any, target_frags: Any) -> np.ndarray:
    """Classifier scores for row-aligned fragment matrices, shape (N,)."""
    s = np.asarray(source_frags, dtype=np.float32)
    t = np.asarray(target_frags, dtype=np.float32)
    if s.ndim != 2 or s.shape != t.shape:
        raise ValueError(
            f"fragment matrices must share an (N, width) shape, got {s.shape} and {t.shape}"
        )
    mgmp.classifier.eval()
    with torch.no_grad():
        scores = mgmp.classifier.forward(np.concatenate([s, t], axis=1))
    return np.asarray(scores, dtype=np.float32).reshape(-1)


def predict_fragment(mgmp: MgmpModel, source_frag: Any, target_frag: Any) -> float:
    """Score one fragment pair: the classifier applied to their concatenation."""
    s = np.asarray(source_frag, dtype=np.float32).reshape(1, -1)
    t = np.asarray(target_frag, dtype=np.float32).reshape(1, -1)
    return float(predict_fragments(mgmp, s, t)[0])


@dataclass
class ProvenanceVerdict:
    """Set-level decision for one candidate model against one source."""

    source_model_id: str
    target_model_id: str
    delta: float
    mean_score: float
    decision: int
    fragment_bits: list[int]
    scores: list[float]

    def to_json(self) -> dict[str, Any]:
        return {
            "sourceModelId": self.source_model_id,
            "targetModelId": self.target_model_id,
            "delta": self.delta,
            "meanScore": self.mean_score,
            "decision": self.decision,
            "numFragments": len(self.fragment_bits),
            "fragmentBits": self.fragment_bits,
            "scores": self.scores,
        }


def predict_model(
    mgmp: MgmpModel, source_dna: ModelDna, target_dna: ModelDna, delta: float | None = None
) -> ProvenanceVerdict:
    """Score every aligned fragment pair and decide at threshold delta.

    A fragment votes homologous when its score exceeds 0.5; the model-level
    decision is 1 exactly when the mean score reaches delta.
    """
    delta = mgmp.config.delta if delta is None else float(delta)
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if source_dna.generator_version_hash != target_dna.generator_version_hash:
        raise ValueError(
            "fingerprints were produced by different generator versions"
        )
    if source_dna.assembly_mode != target_dna.assembly_mode:
        raise ValueError("fingerprints disagree on assembly mode")
    if len(source_dna) != len(target_dna):
        raise ValueError(
            f"fingerprints cover different input counts: {len(source_dna)} vs {len(target_dna)}"
        )
    scores = predict_fragments(mgmp, source_dna.matrix, target_dna.matrix)
    mean_score = float(scores.mean())
    return ProvenanceVerdict(
        source_model_id=source_dna.model_id,
        target_model_id=target_dna.model_id,
        delta=delta,
        mean_score=mean_score,
        decision=int(mean_score >= delta),
        fragment_bits=[int(s > 0.5) for s in scores],
        scores=[float(s) for s in scores],
    )


@dataclass
class EvalReport:
    """Fragment- and model-level quality of the verifier on held-out models."""

    accuracy: float
    correct_homologous: int
    correct_non_homologous: int
    fragments_per_relation: int
    delta: float
    decision_accuracy: float
    model_records: list[dict]
    delta_sweep: list[dict]

    def to_json(self) -> dict[str, Any]:
        return {
            "formatVersion": REPORT_FORMAT_VERSION,
            "accuracy": self.accuracy,
            "correctHomologous": self.correct_homologous,
            "correctNonHomologous": self.correct_non_homologous,
            "fragmentsPerRelation": self.fragments_per_relation,
            "delta": self.delta,
            "decisionAccuracy": self.decision_accuracy,
            "models": self.model_records,
            "deltaSweep": self.delta_sweep,
        }


def source_dna_for(mgmp: MgmpModel, pool: ModelPool, source_data: LabeledDataset) -> ModelDna:
    source_model = model_from_checkpoint(pool.source)
    return generate_model_dna(
        mgmp.generator,
        source_model,
        source_data,
        pool.source.checkpoint_id,
        mode=mgmp.config.assembly_mode,
        output_kind=mgmp.config.model_output,
    )


def evaluate(
    mgmp: MgmpModel,
    pool: ModelPool,
    source_data: LabeledDataset,
    delta: float | None = None,
    sweep_deltas: Sequence[float] = DEFAULT_DELTA_SWEEP,
) -> EvalReport:
    """Score all eval-role pool entries against the source fingerprint.

    Fragment accuracy averages the homologous hit rate and the non-homologous
    rejection rate, so both relations must contribute the same number of
    fragments; unbalanced eval sets are rejected rather than silently skewed.
    """
    delta = mgmp.config.delta if delta is None else float(delta)
    eval_entries = [e for e in pool.entries if e.role == ROLE_EVAL]
    if not eval_entries:
        raise ValueError("pool has no eval-role entries to evaluate on")
    source_dna = source_dna_for(mgmp, pool, source_data)

    records = []
    mean_scores: dict[str, tuple[float, int]] = {}
    counts = {True: 0, False: 0}
    correct = {True: 0, False: 0}
    for entry in eval_entries:
        target_dna = generate_model_dna(
            mgmp.generator,
            entry.load_model(),
            source_data,
            entry.model_id,
            mode=mgmp.config.assembly_mode,
            output_kind=mgmp.config.model_output,
        )
        verdict = predict_model(mgmp, source_dna, target_dna, delta)
        is_hom = entry.relation == RELATION_HOMOLOGOUS
        expected = 1 if is_hom else 0
        bits = np.asarray(verdict.fragment_bits)
        counts[is_hom] += bits.size
        correct[is_hom] += int((bits == expected).sum())
        mean_scores[entry.model_id] = (verdict.mean_score, expected)
        records.append(
            {
                "modelId": entry.model_id,
                "relation": entry.relation,
                "taskId": entry.task_id,
                "meanScore": verdict.mean_score,
                "decision": verdict.decision,
                "expectedDecision": expected,
                "decisionCorrect": verdict.decision == expected,
                "fragmentAccuracy": float((bits == expected).mean()),
            }
        )
    if counts[True] == 0 or counts[False] == 0:
        raise ValueError("evaluation needs both homologous and non-homologous eval models")
    if counts[True] != counts[False]:
        raise ValueError(
            f"evaluation needs balanced relations, got {counts[True]} homologous and "
            f"{counts[False]} non-homologous fragments"
        )
    n = counts[True]
    accuracy = (correct[True] + correct[False]) / (2 * n)
    decision_accuracy = float(np.mean([r["decisionCorrect"] for r in records]))
    sweep = []
    for d in sweep_deltas:
        decisions = {mid: int(ms >= d) for mid, (ms, _) in mean_scores.items()}
        acc = float(
            np.mean([decisions[mid] == exp for mid, (_, exp) in mean_scores.items()])
        )
        sweep.append({"delta": d, "decisions": decisions, "decisionAccuracy": acc})
    return EvalReport(
        accuracy=float(accuracy),
        correct_homologous=correct[True],
        correct_non_homologous=correct[False],
        fragments_per_relation=n,
        delta=delta,
        decision_accuracy=decision_accuracy,
        model_records=records,
        delta_sweep=sweep,
    )


def save_mgmp(mgmp: MgmpModel, dir_path: Path | str) -> Path:
    """Write generator/classifier checkpoints plus an mgmp.json manifest."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    task = mgmp.source_task_id or "unknown"
    for name, net in (("generator", mgmp.generator), ("classifier", mgmp.classifier)):
        ckpt = checkpoint_from_model(
            net,
            f"mgmp-{name}",
            Lineage(init_from=None, trained_on_task_id=task, seed=mgmp.config.seed),
        )
        save_checkpoint(ckpt, dir_path / f"{name}.ckpt")
    manifest = {
        "formatVersion": MGMP_FORMAT_VERSION,
        "config": mgmp.config.to_json(),
        "sourceTaskId": mgmp.source_task_id,
        "generatorVersionHash": mgmp.generator_hash,
        "generatorFile": "generator.ckpt",
        "classifierFile": "classifier.ckpt",
        "lossLog": mgmp.loss_log,
    }
    path = dir_path / "mgmp.json"
    write_json(path, manifest)
    return path


def load_mgmp(dir_path: Path | str) -> MgmpModel:
    dir_path = Path(dir_path)
    manifest = read_json(dir_path / "mgmp.json")
    version = manifest.get("formatVersion")
    if version != MGMP_FORMAT_VERSION:
        raise ContainerError(f"mgmp.json: unsupported formatVersion {version!r}")
    generator = model_from_checkpoint(load_checkpoint(dir_path / manifest["generatorFile"]))
    classifier = model_from_checkpoint(load_checkpoint(dir_path / manifest["classifierFile"]))
    mgmp = MgmpModel(
        generator=generator,
        classifier=classifier,
        config=MgmpConfig.from_json(manifest["config"]),
        loss_log=manifest.get("lossLog", []),
        source_task_id=manifest.get("sourceTaskId"),
    )
    stored = manifest.get("generatorVersionHash")
    if stored is not None and stored != mgmp.generator_hash:
        raise ContainerError(
            f"{dir_path}/mgmp.json: generator parameters do not match the stored hash"
        )
    return mgmp
