"""Fingerprint training loop, verdict rules, and evaluation arithmetic."""

from __future__ import annotations

import numpy as np
import pytest
import torch

import modeldna.engine as engine
from modeldna.container import ContainerError
from modeldna.dna import ASSEMBLY_CONCAT, dna_from_matrix, generate_model_dna
from modeldna.engine import (
    MgmpConfig,
    ProvenanceVerdict,
    build_mgmp,
    evaluate,
    load_mgmp,
    predict_fragment,
    predict_fragments,
    predict_model,
    save_mgmp,
    source_dna_for,
    train_mgmp,
)
from modeldna.nets import flatten_params
from modeldna.pool import RELATION_HOMOLOGOUS, RELATION_NON_HOMOLOGOUS, build_pool

from conftest import tiny_spec
from modeldna.config import parse_run_config
from modeldna.pipeline import build_tasks


def test_config_validation():
    with pytest.raises(ValueError):
        MgmpConfig(tau=0.0)
    with pytest.raises(ValueError):
        MgmpConfig(delta=0.0)
    with pytest.raises(ValueError):
        MgmpConfig(delta=1.5)
    with pytest.raises(ValueError):
        MgmpConfig(batch_size=1)
    with pytest.raises(ValueError):
        MgmpConfig(assembly_mode="merge")
    with pytest.raises(ValueError):
        MgmpConfig(model_output="attention")
    with pytest.raises(ValueError):
        MgmpConfig(dropout_rate=1.0)
    with pytest.raises(ValueError):
        MgmpConfig(latent_dim=0)


def test_config_json_round_trip_rejects_unknown_keys():
    cfg = MgmpConfig(tau=0.7, epochs=3, generator_hidden=(5, 4), latent_dim=6)
    clone = MgmpConfig.from_json(cfg.to_json())
    assert clone == cfg
    with pytest.raises(ValueError, match="unknown"):
        MgmpConfig.from_json({"tau": 0.5, "temperature": 1.0})


def test_build_mgmp_shapes_and_ablation():
    cfg = MgmpConfig(epochs=0, batch_size=2, dropout_rate=0.0)
    mgmp = build_mgmp(input_dim=5, num_classes=3, cfg=cfg)
    # addition mode: latent width equals the class count, classifier sees a pair
    assert mgmp.generator.arch.num_classes == 3
    assert mgmp.classifier.arch.input_shape == (6,)
    x = np.zeros(5, dtype=np.float32)
    z = mgmp.generator.forward(x)
    assert z.shape == (3,)

    off = build_mgmp(5, 3, MgmpConfig(epochs=0, batch_size=2, generator_enabled=False))
    assert np.array_equal(
        flatten_params(off.generator), np.zeros_like(flatten_params(off.generator))
    )
    assert np.allclose(off.generator.forward(x), np.zeros(3))


def test_build_mgmp_latent_dim_requires_concat():
    cfg = MgmpConfig(epochs=0, batch_size=2, latent_dim=7, assembly_mode=ASSEMBLY_CONCAT)
    mgmp = build_mgmp(5, 3, cfg)
    assert mgmp.generator.arch.num_classes == 7
    assert mgmp.classifier.arch.input_shape == (20,)  # two (7+3)-wide fragments


def test_train_logs_all_terms(small_mgmp):
    log = small_mgmp.loss_log
    assert len(log) == small_mgmp.config.epochs
    for row in log:
        assert {"epoch", "total", "similarity", "intra", "generatorNorm", "bce"} <= set(row)


def test_train_leaves_pool_frozen(small_pool, small_tasks):
    before = {e.model_id: flatten_params(e.load_model()) for e in small_pool.entries}
    before["__source__"] = flatten_params(
        __import__("modeldna.nets", fromlist=["model_from_checkpoint"]).model_from_checkpoint(
            small_pool.source
        )
    )
    cfg = MgmpConfig(epochs=2, batch_size=2, dropout_rate=0.0, seed=5,
                     generator_hidden=(8,), classifier_hidden=(8,))
    train_mgmp(small_pool, small_tasks.source, cfg)
    after = {e.model_id: flatten_params(e.load_model()) for e in small_pool.entries}
    for mid, vec in before.items():
        if mid == "__source__":
            continue
        assert np.array_equal(vec, after[mid]), f"{mid} drifted"


def test_train_is_seed_deterministic(small_pool, small_tasks):
    cfg = MgmpConfig(epochs=2, batch_size=2, dropout_rate=0.0, seed=21,
                     generator_hidden=(8,), classifier_hidden=(8,))
    a = train_mgmp(small_pool, small_tasks.source, cfg)
    b = train_mgmp(small_pool, small_tasks.source, cfg)
    assert np.array_equal(flatten_params(a.generator), flatten_params(b.generator))
    assert np.array_equal(flatten_params(a.classifier), flatten_params(b.classifier))
    assert a.loss_log == b.loss_log
    c = train_mgmp(small_pool, small_tasks.source, MgmpConfig(
        epochs=2, batch_size=2, dropout_rate=0.0, seed=22,
        generator_hidden=(8,), classifier_hidden=(8,)))
    assert not np.array_equal(flatten_params(a.generator), flatten_params(c.generator))


def test_predict_fragments_composition_oracle(small_mgmp):
    rng = np.random.default_rng(0)
    width = small_mgmp.classifier.arch.input_shape[0] // 2
    s = rng.normal(size=(5, width)).astype(np.float32)
    t = rng.normal(size=(5, width)).astype(np.float32)
    scores = predict_fragments(small_mgmp, s, t)
    assert scores.shape == (5,)
    assert np.all((scores >= 0) & (scores <= 1))
    small_mgmp.classifier.eval()
    with torch.no_grad():
        want = small_mgmp.classifier.forward(
            np.concatenate([s, t], axis=1)
        ).reshape(-1)
    assert np.allclose(scores, want, atol=1e-6)
    one = predict_fragment(small_mgmp, s[2], t[2])
    assert one == pytest.approx(float(scores[2]), abs=1e-6)


def test_predict_fragments_validates_shapes(small_mgmp):
    with pytest.raises(ValueError):
        predict_fragments(small_mgmp, np.zeros((3, 4)), np.zeros((2, 4)))


def _stub_dna(model_id, mat, mode, gen_hash):
    return dna_from_matrix(np.asarray(mat, dtype=np.float32), model_id, mode, gen_hash)


def test_predict_model_decision_rules(small_mgmp, small_pool, small_tasks):
    src = source_dna_for(small_mgmp, small_pool, small_tasks.source)
    entry = small_pool.entries[0]
    target = generate_model_dna(
        small_mgmp.generator,
        entry.load_model(),
        small_tasks.source,
        entry.model_id,
        mode=small_mgmp.config.assembly_mode,
        output_kind=small_mgmp.config.model_output,
    )
    verdict = predict_model(small_mgmp, src, target, delta=0.5)
    scores = predict_fragments(small_mgmp, src.matrix, target.matrix)
    assert verdict.mean_score == pytest.approx(float(scores.mean()), abs=1e-6)
    assert verdict.fragment_bits == [int(s > 0.5) for s in scores]
    assert verdict.decision == int(verdict.mean_score >= 0.5)
    assert verdict.source_model_id == small_pool.source.checkpoint_id
    assert verdict.target_model_id == entry.model_id
    with pytest.raises(ValueError):
        predict_model(small_mgmp, src, target, delta=0.0)
    with pytest.raises(ValueError):
        predict_model(small_mgmp, src, target, delta=1.2)


def test_predict_model_rejects_mismatched_dna(small_mgmp, small_pool, small_tasks):
    src = source_dna_for(small_mgmp, small_pool, small_tasks.source)
    other = _stub_dna("x", src.matrix, src.assembly_mode, "different-generator")
    with pytest.raises(ValueError, match="generator"):
        predict_model(small_mgmp, src, other)
    shorter = _stub_dna("x", src.matrix[:-1], src.assembly_mode, src.generator_version_hash)
    with pytest.raises(ValueError):
        predict_model(small_mgmp, src, shorter)


def test_verdict_json_shape():
    verdict = ProvenanceVerdict(
        source_model_id="s",
        target_model_id="t",
        delta=0.9,
        mean_score=0.75,
        decision=0,
        fragment_bits=[1, 0, 1],
        scores=[0.9, 0.2, 0.8],
    )
    payload = verdict.to_json()
    assert payload["numFragments"] == 3
    assert payload["targetModelId"] == "t"
    assert payload["decision"] == 0


def _verdict_stub(score_by_relation):
    """predict_model replacement emitting fixed per-relation fragment scores."""

    def stub(mgmp, source_dna, target_dna, delta=None):
        delta = mgmp.config.delta if delta is None else float(delta)
        is_hom = "hom" in target_dna.model_id
        scores = list(score_by_relation["hom" if is_hom else "non"])
        bits = [int(s > 0.5) for s in scores]
        mean = float(np.mean(scores))
        return ProvenanceVerdict(
            source_model_id=source_dna.model_id,
            target_model_id=target_dna.model_id,
            delta=delta,
            mean_score=mean,
            decision=int(mean >= delta),
            fragment_bits=bits,
            scores=scores,
        )

    return stub


def test_evaluate_accuracy_arithmetic(monkeypatch, small_mgmp, small_pool, small_tasks):
    # 100 fragments per relation: homologous 80 hits, non-homologous 60
    # rejections -> (80 + 60) / 200
    hom_scores = [0.9] * 80 + [0.1] * 20
    non_scores = [0.1] * 60 + [0.9] * 40
    monkeypatch.setattr(
        engine, "predict_model", _verdict_stub({"hom": hom_scores, "non": non_scores})
    )
    report = evaluate(small_mgmp, small_pool, small_tasks.source, delta=0.5)
    assert report.accuracy == pytest.approx(0.7)
    assert report.correct_homologous == 80
    assert report.correct_non_homologous == 60
    assert report.fragments_per_relation == 100
    assert report.decision_accuracy == pytest.approx(1.0)  # means 0.74 vs 0.42


def test_evaluate_perfect_and_coinflip_scorers(monkeypatch, small_mgmp, small_pool, small_tasks):
    n = len(small_tasks.source)
    monkeypatch.setattr(
        engine,
        "predict_model",
        _verdict_stub({"hom": [1.0] * n, "non": [0.0] * n}),
    )
    report = evaluate(small_mgmp, small_pool, small_tasks.source)
    assert report.accuracy == 1.0
    assert report.decision_accuracy == 1.0

    monkeypatch.setattr(
        engine,
        "predict_model",
        _verdict_stub({"hom": [1.0] * n, "non": [1.0] * n}),
    )
    report = evaluate(small_mgmp, small_pool, small_tasks.source)
    assert report.accuracy == 0.5  # all-positive scorer is a coin flip overall


def test_evaluate_delta_sweep_consistency(small_mgmp, small_pool, small_tasks):
    report = evaluate(
        small_mgmp, small_pool, small_tasks.source, sweep_deltas=(0.3, 0.6, 0.9)
    )
    means = {r["modelId"]: r["meanScore"] for r in report.model_records}
    assert [row["delta"] for row in report.delta_sweep] == [0.3, 0.6, 0.9]
    for row in report.delta_sweep:
        for mid, decision in row["decisions"].items():
            assert decision == int(means[mid] >= row["delta"])


def test_evaluate_requires_balanced_relations(small_tasks, small_pool):
    cfg, tasks = parse_run_config(tiny_spec()), small_tasks
    # rebuild a pool whose eval side is unbalanced: 1 homologous, 0 non
    pool = build_pool(
        small_pool.source,
        tasks.pool_tasks,
        tasks.eval_tasks,
        pool_counts=(1, 1),
        eval_counts=(1, 0),
        fine_tune_cfg=cfg.fine_tune.to_train_config(1),
        scratch_cfg=cfg.scratch_train.to_train_config(2),
        base_seed=9,
    )
    mgmp = train_mgmp(
        pool,
        tasks.source,
        MgmpConfig(epochs=0, batch_size=2, dropout_rate=0.0,
                   generator_hidden=(8,), classifier_hidden=(8,)),
    )
    with pytest.raises(ValueError, match="both homologous and non-homologous"):
        evaluate(mgmp, pool, tasks.source)

    lopsided = build_pool(
        small_pool.source,
        tasks.pool_tasks,
        tasks.eval_tasks,
        pool_counts=(1, 1),
        eval_counts=(2, 1),
        fine_tune_cfg=cfg.fine_tune.to_train_config(1),
        scratch_cfg=cfg.scratch_train.to_train_config(2),
        base_seed=9,
    )
    with pytest.raises(ValueError, match="balanced"):
        evaluate(mgmp, lopsided, tasks.source)


def test_save_load_round_trip(tmp_path, small_mgmp):
    save_mgmp(small_mgmp, tmp_path / "mgmp")
    loaded = load_mgmp(tmp_path / "mgmp")
    assert loaded.config == small_mgmp.config
    assert np.array_equal(
        flatten_params(loaded.generator), flatten_params(small_mgmp.generator)
    )
    assert np.array_equal(
        flatten_params(loaded.classifier), flatten_params(small_mgmp.classifier)
    )
    assert loaded.source_task_id == small_mgmp.source_task_id
    assert loaded.loss_log == small_mgmp.loss_log
    assert loaded.generator_hash == small_mgmp.generator_hash


def test_load_detects_generator_tamper(tmp_path, small_mgmp):
    save_mgmp(small_mgmp, tmp_path / "mgmp")
    manifest = tmp_path / "mgmp" / "mgmp.json"
    text = manifest.read_text().replace(
        small_mgmp.generator_hash, "0" * len(small_mgmp.generator_hash)
    )
    manifest.write_text(text)
    with pytest.raises(ContainerError):
        load_mgmp(tmp_path / "mgmp")
