"""Synthetic tasks and the homologous / non-homologous model pool."""

from __future__ import annotations

import numpy as np
import pytest

from modeldna.data import LabeledDataset, make_synthetic_blobs, partition_classes
from modeldna.nets import TrainConfig, flatten_params, mlp_arch, model_from_checkpoint
from modeldna.pool import (
    ModelPool,
    PoolEntry,
    PoolError,
    RELATION_HOMOLOGOUS,
    RELATION_NON_HOMOLOGOUS,
    ROLE_EVAL,
    ROLE_POOL,
    build_pool,
    sample_pair,
    train_homologous,
    train_non_homologous,
    train_source,
)


def test_blobs_are_seed_deterministic_and_balanced():
    a = make_synthetic_blobs(4, 10, 5, 0.5, seed=3)
    b = make_synthetic_blobs(4, 10, 5, 0.5, seed=3)
    c = make_synthetic_blobs(4, 10, 5, 0.5, seed=4)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.features, c.features)
    assert a.features.shape == (40, 5)
    assert a.features.dtype == np.float32
    counts = np.bincount(a.labels, minlength=4)
    assert list(counts) == [10, 10, 10, 10]


def test_blobs_cluster_around_per_class_means_at_low_spread():
    # with spread far below the center scale every point sits nearest the
    # mean of its own class; nearest-mean classification recovers the labels
    data = make_synthetic_blobs(5, 30, 6, 0.05, seed=9)
    means = np.stack(
        [data.features[data.labels == c].mean(axis=0) for c in range(5)]
    )
    d = np.linalg.norm(data.features[:, None, :] - means[None, :, :], axis=-1)
    assert np.array_equal(d.argmin(axis=1), data.labels)


def test_blobs_input_validation():
    with pytest.raises(ValueError):
        make_synthetic_blobs(1, 10, 4, 0.5, seed=0)
    with pytest.raises(ValueError):
        make_synthetic_blobs(3, 0, 4, 0.5, seed=0)
    with pytest.raises(ValueError):
        make_synthetic_blobs(3, 10, 0, 0.5, seed=0)


def test_partition_classes_builds_disjoint_relabeled_tasks():
    parent = make_synthetic_blobs(9, 6, 4, 0.5, seed=2)
    split, tasks = partition_classes(parent, [3, 3, 2], seed=1)
    assert len(tasks) == 3
    used = [cls for group in split.groups for cls in group]
    assert len(used) == len(set(used)) == 8
    for task, group in zip(tasks, split.groups):
        assert task.num_classes == len(group)
        assert sorted(set(task.labels.tolist())) == list(range(len(group)))
        assert len(task) == len(group) * 6
    with pytest.raises(ValueError):
        partition_classes(parent, [5, 5], seed=1)
    with pytest.raises(ValueError):
        partition_classes(parent, [0, 2], seed=1)


def test_partition_is_seed_deterministic():
    parent = make_synthetic_blobs(6, 4, 4, 0.5, seed=2)
    s1, _ = partition_classes(parent, [2, 2], seed=7)
    s2, _ = partition_classes(parent, [2, 2], seed=7)
    s3, _ = partition_classes(parent, [2, 2], seed=8)
    assert s1.groups == s2.groups
    assert s1.groups != s3.groups


def _quick_cfg(seed=0, epochs=4):
    return TrainConfig(learning_rate=0.02, epochs=epochs, batch_size=8, seed=seed)


def _mini_world():
    parent = make_synthetic_blobs(9, 8, 5, 0.4, seed=10)
    _, tasks = partition_classes(parent, [3, 3, 3], seed=11)
    source_task, pool_task, eval_task = tasks
    source = train_source(mlp_arch(5, (10,), 3), source_task, _quick_cfg(1), "src")
    return source, source_task, pool_task, eval_task


def test_zero_epoch_fine_tune_keeps_source_parameters():
    source, _, pool_task, _ = _mini_world()
    hom = train_homologous(source, pool_task, _quick_cfg(2, epochs=0), "h0")
    assert hom.lineage.init_from == "src"
    # same class count: the head is reused, so every parameter matches
    src_model = model_from_checkpoint(source)
    hom_model = model_from_checkpoint(hom)
    assert np.array_equal(flatten_params(src_model), flatten_params(hom_model))


def test_fine_tune_records_lineage_and_moves_parameters():
    source, _, pool_task, _ = _mini_world()
    hom = train_homologous(source, pool_task, _quick_cfg(2), "h1")
    non = train_non_homologous(source.arch, pool_task, _quick_cfg(3), "n1")
    assert hom.lineage.init_from == "src"
    assert hom.lineage.trained_on_task_id == pool_task.task_id
    assert non.lineage.init_from is None
    src_vec = flatten_params(model_from_checkpoint(source))
    hom_vec = flatten_params(model_from_checkpoint(hom))
    non_vec = flatten_params(model_from_checkpoint(non))
    assert not np.array_equal(src_vec, hom_vec)
    # a fine-tuned copy stays far closer to the source than a scratch model
    assert np.linalg.norm(hom_vec - src_vec) < np.linalg.norm(non_vec - src_vec)


def test_build_pool_counts_roles_and_round_robin(small_pool):
    pool = small_pool
    assert len(pool.select(RELATION_HOMOLOGOUS, ROLE_POOL)) == 1
    assert len(pool.select(RELATION_NON_HOMOLOGOUS, ROLE_POOL)) == 1
    assert len(pool.select(RELATION_HOMOLOGOUS, ROLE_EVAL)) == 1
    assert len(pool.select(RELATION_NON_HOMOLOGOUS, ROLE_EVAL)) == 1
    for entry in pool.entries:
        if entry.relation == RELATION_HOMOLOGOUS:
            assert entry.checkpoint.lineage.init_from == pool.source.checkpoint_id
        else:
            assert entry.checkpoint.lineage.init_from is None
        assert entry.task_id == entry.checkpoint.lineage.trained_on_task_id
    pool_tasks = {e.task_id for e in pool.entries if e.role == ROLE_POOL}
    eval_tasks = {e.task_id for e in pool.entries if e.role == ROLE_EVAL}
    assert not pool_tasks & eval_tasks


def test_build_pool_spreads_models_over_tasks():
    source, source_task, pool_task, eval_task = _mini_world()
    pool = build_pool(
        source,
        [pool_task],
        [eval_task],
        pool_counts=(2, 2),
        eval_counts=(1, 1),
        fine_tune_cfg=_quick_cfg(5, epochs=1),
        scratch_cfg=_quick_cfg(6, epochs=1),
        base_seed=42,
    )
    ids = sorted(e.model_id for e in pool.entries)
    assert ids == [
        "eval-hom-00",
        "eval-non-00",
        "pool-hom-00",
        "pool-hom-01",
        "pool-non-00",
        "pool-non-01",
    ]
    seeds = [e.checkpoint.lineage.seed for e in pool.entries]
    assert len(set(seeds)) == len(seeds)  # every model trains under its own seed


def test_pool_requires_both_relations_in_pool_role():
    source, source_task, pool_task, _ = _mini_world()
    hom = train_homologous(source, pool_task, _quick_cfg(2, epochs=1), "h1")
    entry = PoolEntry(
        model_id="h1",
        relation=RELATION_HOMOLOGOUS,
        role=ROLE_POOL,
        task_id=pool_task.task_id,
        checkpoint=hom,
    )
    with pytest.raises(PoolError, match="nonHomologous"):
        ModelPool(source=source, entries=[entry])


def test_pool_rejects_duplicate_ids_and_task_overlap():
    source, source_task, pool_task, eval_task = _mini_world()
    hom = train_homologous(source, pool_task, _quick_cfg(2, epochs=1), "a")
    non = train_non_homologous(source.arch, pool_task, _quick_cfg(3, epochs=1), "a")
    mk = lambda ck, rel, role, task: PoolEntry(
        model_id=ck.checkpoint_id, relation=rel, role=role, task_id=task, checkpoint=ck
    )
    with pytest.raises(PoolError, match="unique"):
        ModelPool(
            source=source,
            entries=[
                mk(hom, RELATION_HOMOLOGOUS, ROLE_POOL, pool_task.task_id),
                mk(non, RELATION_NON_HOMOLOGOUS, ROLE_POOL, pool_task.task_id),
            ],
        )


def test_sample_pair_is_uniform_over_pool_role(small_pool):
    # expand: sample_pair must return (homologous, non-homologous) pool-role
    # entries, uniformly over each relation's candidates
    rng = np.random.default_rng(123)
    for _ in range(50):
        hom, non = sample_pair(small_pool, rng)
        assert hom.relation == RELATION_HOMOLOGOUS and hom.role == ROLE_POOL
        assert non.relation == RELATION_NON_HOMOLOGOUS and non.role == ROLE_POOL


def test_sample_pair_frequencies_within_three_sigma():
    source, source_task, pool_task, eval_task = _mini_world()
    pool = build_pool(
        source,
        [pool_task],
        [eval_task],
        pool_counts=(3, 3),
        eval_counts=(1, 1),
        fine_tune_cfg=_quick_cfg(5, epochs=0),
        scratch_cfg=_quick_cfg(6, epochs=0),
        base_seed=43,
    )
    rng = np.random.default_rng(7)
    draws = 9000
    counts: dict[str, int] = {}
    for _ in range(draws):
        hom, non = sample_pair(pool, rng)
        counts[hom.model_id] = counts.get(hom.model_id, 0) + 1
        counts[non.model_id] = counts.get(non.model_id, 0) + 1
    p = 1.0 / 3.0
    sigma = (draws * p * (1 - p)) ** 0.5
    for model_id, got in counts.items():
        assert abs(got - draws * p) < 3 * sigma, f"{model_id} drawn {got} times"


def test_dataset_csv_round_trip(tmp_path):
    data = make_synthetic_blobs(3, 4, 5, 0.5, seed=1)
    path = data.to_csv(tmp_path / "task.csv")
    rows = path.read_text().strip().splitlines()
    assert len(rows) == 1 + len(data)  # header plus one row per sample
    assert rows[0].count(",") == data.feature_dim
