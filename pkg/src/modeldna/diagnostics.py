"""Classical provenance signals to compare the learned verifier against.

Includes the parameter-distance baseline, layer replacement curves, and a
catastrophic-forgetting probe. These work straight off checkpoints and need
no fingerprint machinery.
"""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from .data import LabeledDataset
from .nets import Checkpoint, LayeredModel, evaluate_accuracy, flatten_params, model_from_checkpoint, replace_last_layers
from .pool import ROLE_EVAL, ROLE_POOL, RELATION_HOMOLOGOUS, ModelPool

BASELINE_FORMAT_VERSION = 1


def _param_vector(obj: Checkpoint | LayeredModel) -> np.ndarray:
    if isinstance(obj, Checkpoint):
        if not obj.params:
            return np.zeros(0, dtype=np.float32)
        return np.concatenate([a.ravel() for a in obj.params.values()]).astype(np.float32)
    if isinstance(obj, LayeredModel):
        return flatten_params(obj)
    raise TypeError(f"expected a Checkpoint or LayeredModel, got {type(obj).__name__}")


def _as_model(obj: Checkpoint | LayeredModel) -> LayeredModel:
    return model_from_checkpoint(obj) if isinstance(obj, Checkpoint) else obj


def delta_w_norm(a: Checkpoint | LayeredModel, b: Checkpoint | LayeredModel) -> float:
    """l2 distance between two models' flattened parameter vectors."""
    va = _param_vector(a)
    vb = _param_vector(b)
    if va.shape != vb.shape:
        raise ValueError(
            f"models have incomparable parameter counts: {va.shape[0]} vs {vb.shape[0]}"
        )
    return float(np.linalg.norm(va.astype(np.float64) - vb.astype(np.float64)))


def _balanced_accuracy(labels: np.ndarray, preds: np.ndarray) -> float:
    pos = labels == 1
    neg = ~pos
    tpr = float(preds[pos].mean()) if pos.any() else 0.0
    tnr = float((1 - preds[neg]).mean()) if neg.any() else 0.0
    return 0.5 * (tpr + tnr)


def baseline_classify(pool: ModelPool) -> dict[str, Any]:
    """Parameter-distance heuristic: close to the source means related.

    The distance threshold is chosen on pool-role entries to maximize
    balanced accuracy (smallest such threshold on ties), then applied
    unchanged to eval-role entries. The baseline makes no quality promise;
    it exists as a reference point.
    """
    def describe(entries):
        dists = np.array([delta_w_norm(pool.source, e.checkpoint) for e in entries])
        labels = np.array([1 if e.relation == RELATION_HOMOLOGOUS else 0 for e in entries])
        return dists, labels

    pool_entries = [e for e in pool.entries if e.role == ROLE_POOL]
    eval_entries = [e for e in pool.entries if e.role == ROLE_EVAL]
    if not eval_entries:
        raise ValueError("baseline needs eval-role entries to report accuracy on")
    pool_d, pool_y = describe(pool_entries)
    eval_d, eval_y = describe(eval_entries)

    uniq = np.unique(pool_d)
    candidates = [uniq[0] - 1.0]
    candidates += [0.5 * (lo + hi) for lo, hi in zip(uniq[:-1], uniq[1:])]
    candidates += [uniq[-1] + 1.0]
    best_thr, best_acc = None, -1.0
    for thr in candidates:
        acc = _balanced_accuracy(pool_y, (pool_d <= thr).astype(int))
        if acc > best_acc + 1e-12:
            best_thr, best_acc = float(thr), acc

    eval_pred = (eval_d <= best_thr).astype(int)
    records = [
        {
            "modelId": e.model_id,
            "relation": e.relation,
            "deltaW": float(d),
            "prediction": int(p),
            "correct": bool(p == y),
        }
        for e, d, p, y in zip(eval_entries, eval_d, eval_pred, eval_y)
    ]
    return {
        "formatVersion": BASELINE_FORMAT_VERSION,
        "threshold": best_thr,
        "poolBalancedAccuracy": best_acc,
        "evalAccuracy": float((eval_pred == eval_y).mean()),
        "evalBalancedAccuracy": _balanced_accuracy(eval_y, eval_pred),
        "poolDistances": [
            {"modelId": e.model_id, "relation": e.relation, "deltaW": float(d)}
            for e, d in zip(pool_entries, pool_d)
        ],
        "models": records,
    }


def layer_replacement_curve(
    target: Checkpoint | LayeredModel,
    source: Checkpoint | LayeredModel,
    data: LabeledDataset,
    ks: Sequence[int] | None = None,
) -> list[dict[str, Any]]:
    """Accuracy on ``data`` after grafting the source's last k layers onto the target.

    k = 0 is the plain target; k = (all parameterized layers) is the plain
    source. A truly fine-tuned target recovers source behavior quickly as k
    grows; an unrelated model degrades into mismatched features instead.
    """
    target_model = _as_model(target)
    source_model = _as_model(source)
    total = target_model.arch.parameterized_layer_count
    if ks is None:
        ks = range(total + 1)
    curve = []
    for k in ks:
        merged = replace_last_layers(target_model, source_model, int(k))
        curve.append({"k": int(k), "accuracy": evaluate_accuracy(merged, data)})
    return curve


def forgetting_probe(
    source: Checkpoint | LayeredModel,
    fine_tuned: Checkpoint | LayeredModel,
    source_data: LabeledDataset,
) -> dict[str, float]:
    """Source-task accuracy before and after fine-tuning on something else."""
    source_model = _as_model(source)
    tuned_model = _as_model(fine_tuned)
    if tuned_model.arch.num_classes != source_model.arch.num_classes:
        raise ValueError(
            "forgetting probe needs matching class counts to score the fine-tuned "
            "model on the original task"
        )
    return {
        "accuracyBefore": evaluate_accuracy(source_model, source_data),
        "accuracyAfter": evaluate_accuracy(tuned_model, source_data),
    }
