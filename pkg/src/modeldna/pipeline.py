"""Stage runner: turns a run config into an on-disk artifact tree.

Layout under the run directory:

    config.resolved.json    every knob, defaults materialized
    run.log                 timestamped progress lines (the only timestamps)
    data/*.csv              the generated task datasets
    checkpoints/*.ckpt      source and pool models
    pool.json               pool manifest with content hashes
    mgmp/                   trained generator + classifier + loss log
    fingerprints/*.dna      fragment sets for source and eval models
    verdicts/*.json         per-model provenance decisions
    reports/*.json          evaluation, baseline, diagnostics, ablation
    viz/fragments.json      2-D projection of fragment sets
    .stamps/*.json          per-stage completion records for idempotent reruns

Each stage stamps the config hash and the hashes of everything it wrote.
Rerunning with an unchanged config and intact artifacts is a no-op; any
drift (config edit, deleted or tampered file) reruns the stage. Stage
output on stdout is deterministic; wall-clock times go only to run.log.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import torch

from .config import RunConfig, config_hash, resolved_config
from .data import LabeledDataset, make_synthetic_blobs, partition_classes
from .diagnostics import baseline_classify, forgetting_probe, layer_replacement_curve
from .dna import generate_model_dna, save_fingerprint
from .engine import (
    evaluate,
    load_mgmp,
    predict_model,
    save_mgmp,
    source_dna_for,
    train_mgmp,
)
from .nets import load_checkpoint, mlp_arch, model_from_checkpoint, save_checkpoint
from .pool import (
    RELATION_HOMOLOGOUS,
    ROLE_EVAL,
    build_pool,
    load_pool,
    save_pool,
    train_source,
)
from .util import read_json, sha256_file, write_json

REPLACEMENT_FORMAT_VERSION = 1
ABLATION_FORMAT_VERSION = 1


class MissingPrerequisiteError(RuntimeError):
    """A stage was asked to run before the stage it depends on."""


@dataclass
class StageResult:
    stage: str
    run_dir: str
    skipped: bool
    messages: list[str] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)
    payload: Any | None = None


@dataclass
class TaskBundle:
    source: LabeledDataset
    pool_tasks: list[LabeledDataset]
    eval_tasks: list[LabeledDataset]
    # parent class ids behind each task, in task order (source, pool.., eval..)
    class_groups: list[list[int]] = field(default_factory=list)


def build_tasks(cfg: RunConfig) -> TaskBundle:
    """Regenerate the run's datasets; a pure function of the config."""
    from .util import derive_seed

    d = cfg.data
    parent = make_synthetic_blobs(
        num_classes=d.total_classes,
        per_class=d.per_class,
        dim=d.dim,
        spread=d.spread,
        seed=derive_seed(cfg.seed, "data", "parent"),
        task_id=f"parent-{d.total_classes}c",
    )
    groups = [d.classes_per_task] * (1 + d.pool_tasks + d.eval_tasks)
    split, datasets = partition_classes(parent, groups, derive_seed(cfg.seed, "data", "split"))
    cut = 1 + d.pool_tasks
    return TaskBundle(datasets[0], datasets[1:cut], datasets[cut:], split.groups)


class Run:
    """A run directory bound to one resolved config."""

    def __init__(self, cfg: RunConfig, out_dir: str | Path | None = None):
        torch.set_num_threads(1)
        self.cfg = cfg
        self.resolved = resolved_config(cfg)
        self.hash = config_hash(cfg)
        if out_dir is not None:
            root = Path(out_dir)
        elif cfg.out_dir:
            root = Path(cfg.out_dir)
        elif os.environ.get("MODELDNA_OUT"):
            root = Path(os.environ["MODELDNA_OUT"]) / f"run-{self.hash}"
        else:
            root = Path("runs") / f"run-{self.hash}"
        self.root = root
        self.stamps = root / ".stamps"
        self.stamps.mkdir(parents=True, exist_ok=True)
        config_path = root / "config.resolved.json"
        write_json(config_path, self.resolved)
        self._tasks: TaskBundle | None = None

    @property
    def tasks(self) -> TaskBundle:
        if self._tasks is None:
            self._tasks = build_tasks(self.cfg)
        return self._tasks

    def path(self, *parts: str) -> Path:
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def rel(self, p: Path) -> str:
        return p.relative_to(self.root).as_posix()

    def log(self, message: str) -> None:
        stamp = datetime.now(timezone.utc).isoformat()
        with open(self.root / "run.log", "a", encoding="utf-8") as fh:
            fh.write(f"{stamp} {message}\n")

    def require(self, relative: str, producer: str) -> Path:
        p = self.root / relative
        if not p.exists():
            raise MissingPrerequisiteError(
                f"{relative} not found in {self.root}; run 'modeldna {producer}' "
                "with this config first"
            )
        return p

    def _stamp_file(self, stage: str) -> Path:
        return self.stamps / f"{stage}.json"

    def up_to_date(self, stage: str, extra: dict | None = None) -> bool:
        path = self._stamp_file(stage)
        if not path.exists():
            return False
        try:
            stamp = read_json(path)
        except ValueError:
            return False
        if stamp.get("configHash") != self.hash:
            return False
        if stamp.get("extra") != (extra or {}):
            return False
        for rel, digest in stamp.get("outputs", {}).items():
            target = self.root / rel
            if not target.exists() or sha256_file(target) != digest:
                return False
        return True

    def write_stamp(self, stage: str, outputs: list[Path], extra: dict | None = None) -> None:
        record = {
            "stage": stage,
            "configHash": self.hash,
            "extra": extra or {},
            "outputs": {self.rel(p): sha256_file(p) for p in outputs},
        }
        write_json(self._stamp_file(stage), record)


def _source_arch(cfg: RunConfig):
    return mlp_arch(
        cfg.data.dim,
        cfg.model.hidden,
        cfg.data.classes_per_task,
        head="softmax",
        dropout_rate=cfg.model.dropout_rate,
    )


def _skip_result(run: Run, stage: str, payload_file: str | None = None) -> StageResult:
    payload = None
    if payload_file is not None and (run.root / payload_file).exists():
        payload = read_json(run.root / payload_file)
    run.log(f"{stage}: up to date, skipped")
    return StageResult(
        stage=stage,
        run_dir=str(run.root),
        skipped=True,
        messages=[f"[{stage}] up to date, nothing to do"],
        payload=payload,
    )


def stage_train_source(run: Run) -> StageResult:
    from .util import derive_seed

    stage = "train-source"
    if run.up_to_date(stage):
        return _skip_result(run, stage)
    run.log(f"{stage}: started")
    bundle = run.tasks
    run.log(f"{stage}: parent class split {bundle.class_groups}")
    outputs: list[Path] = []
    for name, data in (
        ("source", bundle.source),
        *((f"pool-{i}", d) for i, d in enumerate(bundle.pool_tasks)),
        *((f"eval-{i}", d) for i, d in enumerate(bundle.eval_tasks)),
    ):
        csv_path = run.path("data", f"{name}.csv")
        data.to_csv(csv_path)
        outputs.append(csv_path)
    train_cfg = run.cfg.source_train.to_train_config(derive_seed(run.cfg.seed, "train", "source"))
    ckpt = train_source(_source_arch(run.cfg), bundle.source, train_cfg, "source")
    ckpt_path = run.path("checkpoints", "source.ckpt")
    save_checkpoint(ckpt, ckpt_path)
    outputs.append(ckpt_path)
    run.write_stamp(stage, outputs)
    run.log(f"{stage}: finished")
    acc = ckpt.metrics["trainAccuracy"]
    return StageResult(
        stage=stage,
        run_dir=str(run.root),
        skipped=False,
        messages=[f"[{stage}] trained source on {bundle.source.task_id} (accuracy {acc:.4f})"],
        artifacts={"sourceCheckpoint": run.rel(ckpt_path)},
    )


def stage_build_pool(run: Run) -> StageResult:
    stage = "build-pool"
    if run.up_to_date(stage):
        return _skip_result(run, stage)
    run.require("checkpoints/source.ckpt", "train-source")
    run.log(f"{stage}: started")
    source = load_checkpoint(run.root / "checkpoints" / "source.ckpt")
    bundle = run.tasks
    p = run.cfg.pool
    pool = build_pool(
        source=source,
        pool_tasks=bundle.pool_tasks,
        eval_tasks=bundle.eval_tasks,
        pool_counts=(p.pool_homologous, p.pool_non_homologous),
        eval_counts=(p.eval_homologous, p.eval_non_homologous),
        fine_tune_cfg=run.cfg.fine_tune.to_train_config(0),
        scratch_cfg=run.cfg.scratch_train.to_train_config(0),
        base_seed=run.cfg.seed,
    )
    manifest_path = save_pool(pool, run.root)
    outputs = [manifest_path]
    outputs += [run.root / "checkpoints" / f"{e.model_id}.ckpt" for e in pool.entries]
    outputs.append(run.root / "checkpoints" / "source.ckpt")
    run.write_stamp(stage, outputs)
    run.log(f"{stage}: finished")
    return StageResult(
        stage=stage,
        run_dir=str(run.root),
        skipped=False,
        messages=[f"[{stage}] built {len(pool.entries)} pool models over "
                  f"{len(bundle.pool_tasks)} pool and {len(bundle.eval_tasks)} eval tasks"],
        artifacts={"poolManifest": run.rel(manifest_path)},
    )


def stage_train_mgmp(run: Run) -> StageResult:
    stage = "train-mgmp"
    if run.up_to_date(stage):
        return _skip_result(run, stage)
    run.require("pool.json", "build-pool")
    run.log(f"{stage}: started")
    pool = load_pool(run.root)
    mgmp_cfg = run.cfg.mgmp_config()
    mgmp = train_mgmp(pool, run.tasks.source, mgmp_cfg)
    manifest_path = save_mgmp(mgmp, run.root / "mgmp")
    outputs = [
        manifest_path,
        run.root / "mgmp" / "generator.ckpt",
        run.root / "mgmp" / "classifier.ckpt",
        run.root / "pool.json",  # tracked so a rebuilt pool invalidates this stage
    ]
    run.write_stamp(stage, outputs)
    run.log(f"{stage}: finished")
    last = mgmp.loss_log[-1]["total"] if mgmp.loss_log else float("nan")
    return StageResult(
        stage=stage,
        run_dir=str(run.root),
        skipped=False,
        messages=[f"[{stage}] trained fingerprint nets for {mgmp_cfg.epochs} epochs "
                  f"(final loss {last:.4f})"],
        artifacts={"mgmpManifest": run.rel(manifest_path)},
    )


def _load_mgmp_and_pool(run: Run):
    run.require("pool.json", "build-pool")
    run.require("mgmp/mgmp.json", "train-mgmp")
    return load_mgmp(run.root / "mgmp"), load_pool(run.root)


def stage_verify(run: Run, delta: float | None = None) -> StageResult:
    stage = "verify"
    mgmp_cfg = run.cfg.mgmp_config()
    effective_delta = mgmp_cfg.delta if delta is None else float(delta)
    extra = {"delta": effective_delta}
    if run.up_to_date(stage, extra):
        return _skip_result(run, stage, "verdicts/verdicts.json")
    mgmp, pool = _load_mgmp_and_pool(run)
    run.log(f"{stage}: started")
    source_dna = source_dna_for(mgmp, pool, run.tasks.source)
    outputs: list[Path] = []
    src_fp = run.path("fingerprints", "source.dna")
    save_fingerprint(source_dna, src_fp)
    outputs.append(src_fp)
    verdicts = []
    for entry in [e for e in pool.entries if e.role == ROLE_EVAL]:
        target_dna = generate_model_dna(
            mgmp.generator,
            entry.load_model(),
            run.tasks.source,
            entry.model_id,
            mode=mgmp.config.assembly_mode,
            output_kind=mgmp.config.model_output,
        )
        fp_path = run.path("fingerprints", f"{entry.model_id}.dna")
        save_fingerprint(target_dna, fp_path)
        outputs.append(fp_path)
        verdict = predict_model(mgmp, source_dna, target_dna, effective_delta)
        v_path = run.path("verdicts", f"{entry.model_id}.json")
        write_json(v_path, verdict.to_json())
        outputs.append(v_path)
        verdicts.append(verdict.to_json())
    payload = {"delta": effective_delta, "verdicts": verdicts}
    combined = run.path("verdicts", "verdicts.json")
    write_json(combined, payload)
    outputs.append(combined)
    outputs.append(run.root / "mgmp" / "mgmp.json")
    run.write_stamp(stage, outputs, extra)
    run.log(f"{stage}: finished")
    return StageResult(
        stage=stage,
        run_dir=str(run.root),
        skipped=False,
        messages=[f"[{stage}] scored {len(verdicts)} candidate models at delta "
                  f"{effective_delta}"],
        artifacts={"verdicts": run.rel(combined)},
        payload=payload,
    )


def stage_evaluate(run: Run, delta: float | None = None) -> StageResult:
    stage = "evaluate"
    mgmp_cfg = run.cfg.mgmp_config()
    effective_delta = mgmp_cfg.delta if delta is None else float(delta)
    extra = {"delta": effective_delta}
    if run.up_to_date(stage, extra):
        return _skip_result(run, stage, "reports/eval.json")
    mgmp, pool = _load_mgmp_and_pool(run)
    run.log(f"{stage}: started")
    report = evaluate(
        mgmp, pool, run.tasks.source, delta=effective_delta, sweep_deltas=run.cfg.delta_sweep
    )
    path = run.path("reports", "eval.json")
    payload = report.to_json()
    write_json(path, payload)
    run.write_stamp(stage, [path, run.root / "mgmp" / "mgmp.json"], extra)
    run.log(f"{stage}: finished")
    return StageResult(
        stage=stage,
        run_dir=str(run.root),
        skipped=False,
        messages=[f"[{stage}] fragment accuracy {report.accuracy:.4f}, "
                  f"decision accuracy {report.decision_accuracy:.4f}"],
        artifacts={"evalReport": run.rel(path)},
        payload=payload,
    )


def stage_baseline(run: Run) -> StageResult:
    stage = "baseline"
    if run.up_to_date(stage):
        return _skip_result(run, stage, "reports/baseline.json")
    run.require("pool.json", "build-pool")
    run.log(f"{stage}: started")
    pool = load_pool(run.root)
    payload = baseline_classify(pool)
    path = run.path("reports", "baseline.json")
    write_json(path, payload)
    run.write_stamp(stage, [path, run.root / "pool.json"])
    run.log(f"{stage}: finished")
    return StageResult(
        stage=stage,
        run_dir=str(run.root),
        skipped=False,
        messages=[f"[{stage}] parameter-distance baseline eval accuracy "
                  f"{payload['evalAccuracy']:.4f}"],
        artifacts={"baselineReport": run.rel(path)},
        payload=payload,
    )


def stage_replace_diagnostic(run: Run) -> StageResult:
    stage = "replace-diagnostic"
    if run.up_to_date(stage):
        return _skip_result(run, stage, "reports/replacement.json")
    run.require("pool.json", "build-pool")
    run.log(f"{stage}: started")
    pool = load_pool(run.root)
    source_model = model_from_checkpoint(pool.source)
    source_data = run.tasks.source
    from .nets import evaluate_accuracy
    from .pool import train_homologous, train_non_homologous
    from .util import derive_seed

    # Pool models are fine-tuned gently so they stay verifiable; a dedicated
    # probe pair is trained with the harsher probe_train recipe to make the
    # forgetting and layer-replacement trends visible.
    probe_task = run.tasks.pool_tasks[0]
    cfg = run.cfg
    hom_cfg = cfg.probe_train.to_train_config(derive_seed(cfg.seed, "probe", "hom"))
    non_cfg = cfg.probe_train.to_train_config(derive_seed(cfg.seed, "probe", "non"))
    probe_hom = train_homologous(pool.source, probe_task, hom_cfg, "probe-hom")
    probe_non = train_non_homologous(pool.source.arch, probe_task, non_cfg, "probe-non")
    hom_model = model_from_checkpoint(probe_hom)
    non_model = model_from_checkpoint(probe_non)
    probe_record = {
        "taskId": probe_task.task_id,
        "homologous": {
            "modelId": probe_hom.checkpoint_id,
            "curve": layer_replacement_curve(hom_model, source_model, source_data),
            "forgetting": forgetting_probe(source_model, hom_model, source_data),
        },
        "nonHomologous": {
            "modelId": probe_non.checkpoint_id,
            "curve": layer_replacement_curve(non_model, source_model, source_data),
        },
    }

    records = []
    for entry in [e for e in pool.entries if e.role == ROLE_EVAL]:
        target_model = entry.load_model()
        curve = layer_replacement_curve(target_model, source_model, source_data)
        record: dict[str, Any] = {
            "modelId": entry.model_id,
            "relation": entry.relation,
            "taskId": entry.task_id,
            "curve": curve,
        }
        if entry.relation == RELATION_HOMOLOGOUS:
            record["forgetting"] = forgetting_probe(source_model, target_model, source_data)
        records.append(record)
    payload = {
        "formatVersion": REPLACEMENT_FORMAT_VERSION,
        "sourceTaskId": source_data.task_id,
        "sourceAccuracy": evaluate_accuracy(source_model, source_data),
        "probe": probe_record,
        "models": records,
    }
    path = run.path("reports", "replacement.json")
    write_json(path, payload)
    run.write_stamp(stage, [path, run.root / "pool.json"])
    run.log(f"{stage}: finished")
    return StageResult(
        stage=stage,
        run_dir=str(run.root),
        skipped=False,
        messages=[
            f"[{stage}] traced layer replacement curves for the probe pair "
            f"and {len(records)} eval models"
        ],
        artifacts={"replacementReport": run.rel(path)},
        payload=payload,
    )


def stage_export_viz(run: Run) -> StageResult:
    from .viz import projection_payload

    stage = "export-viz"
    if run.up_to_date(stage):
        return _skip_result(run, stage, "viz/fragments.json")
    mgmp, pool = _load_mgmp_and_pool(run)
    run.log(f"{stage}: started")
    source_dna = source_dna_for(mgmp, pool, run.tasks.source)
    groups = [{"modelId": source_dna.model_id, "relation": "source", "matrix": source_dna.matrix}]
    for entry in [e for e in pool.entries if e.role == ROLE_EVAL]:
        dna = generate_model_dna(
            mgmp.generator,
            entry.load_model(),
            run.tasks.source,
            entry.model_id,
            mode=mgmp.config.assembly_mode,
            output_kind=mgmp.config.model_output,
        )
        groups.append({"modelId": entry.model_id, "relation": entry.relation, "matrix": dna.matrix})
    payload = projection_payload(groups, n_components=2)
    path = run.path("viz", "fragments.json")
    write_json(path, payload)
    run.write_stamp(stage, [path, run.root / "mgmp" / "mgmp.json"])
    run.log(f"{stage}: finished")
    return StageResult(
        stage=stage,
        run_dir=str(run.root),
        skipped=False,
        messages=[f"[{stage}] projected fragments of {len(groups)} models to 2-D"],
        artifacts={"fragmentProjection": run.rel(path)},
        payload=payload,
    )


def stage_ablation(run: Run) -> StageResult:
    stage = "ablation"
    if run.up_to_date(stage):
        return _skip_result(run, stage, "reports/ablation.json")
    run.require("pool.json", "build-pool")
    run.log(f"{stage}: started")
    pool = load_pool(run.root)
    source_data = run.tasks.source
    base = run.cfg.mgmp_config()
    variants = [
        ("full", base),
        ("noContrastive", dataclasses.replace(base, sim_weight=0.0)),
        ("withoutGenerator", dataclasses.replace(base, generator_enabled=False)),
    ]
    rows = []
    for name, cfg in variants:
        run.log(f"{stage}: training variant {name}")
        mgmp = train_mgmp(pool, source_data, cfg)
        report = evaluate(mgmp, pool, source_data, sweep_deltas=run.cfg.delta_sweep)
        rows.append(
            {
                "variant": name,
                "fragmentAccuracy": report.accuracy,
                "decisionAccuracy": report.decision_accuracy,
                "delta": report.delta,
            }
        )
    payload = {"formatVersion": ABLATION_FORMAT_VERSION, "rows": rows}
    path = run.path("reports", "ablation.json")
    write_json(path, payload)
    run.write_stamp(stage, [path, run.root / "pool.json"])
    run.log(f"{stage}: finished")
    return StageResult(
        stage=stage,
        run_dir=str(run.root),
        skipped=False,
        messages=[f"[{stage}] compared {len(rows)} training variants"],
        artifacts={"ablationReport": run.rel(path)},
        payload=payload,
    )


_STAGES: dict[str, Callable[..., StageResult]] = {
    "train-source": stage_train_source,
    "build-pool": stage_build_pool,
    "train-mgmp": stage_train_mgmp,
    "verify": stage_verify,
    "evaluate": stage_evaluate,
    "baseline": stage_baseline,
    "replace-diagnostic": stage_replace_diagnostic,
    "export-viz": stage_export_viz,
    "ablation": stage_ablation,
}

STAGES = tuple(_STAGES)

DELTA_STAGES = ("verify", "evaluate")


def run_stage(
    stage: str,
    cfg: RunConfig,
    out_dir: str | Path | None = None,
    delta: float | None = None,
) -> StageResult:
    """Execute one named stage against the run directory the config implies."""
    if stage not in _STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {', '.join(STAGES)}")
    run = Run(cfg, out_dir)
    fn = _STAGES[stage]
    if stage in DELTA_STAGES:
        return fn(run, delta=delta)
    if delta is not None:
        raise ValueError(f"--delta only applies to stages: {', '.join(DELTA_STAGES)}")
    return fn(run)
