"""Deterministic 2-D projection of fragment sets for plotting."""

from __future__ import annotations

from typing import Any

import numpy as np

VIZ_FORMAT_VERSION = 1


def pca_project(matrix: Any, n_components: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Principal-component projection with a fixed sign convention.

    Each component is flipped so its largest-magnitude coefficient is
    positive, which makes the output a pure function of the input matrix.
    Returns (coords, explained variance ratio per kept component).
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected an (N, width) matrix, got shape {x.shape}")
    n, d = x.shape
    if not 1 <= n_components <= min(n, d):
        raise ValueError(
            f"n_components must lie in [1, {min(n, d)}] for a {n}x{d} matrix"
        )
    centered = x - x.mean(axis=0)
    _, singulars, vt = np.linalg.svd(centered, full_matrices=False)
    for i in range(vt.shape[0]):
        j = int(np.argmax(np.abs(vt[i])))
        if vt[i, j] < 0:
            vt[i] = -vt[i]
    coords = centered @ vt[:n_components].T
    variance = singulars**2
    total = float(variance.sum())
    ratio = variance[:n_components] / total if total > 0 else np.zeros(n_components)
    return coords.astype(np.float32), ratio.astype(np.float64)


def projection_payload(
    groups: list[dict[str, Any]], n_components: int = 2
) -> dict[str, Any]:
    """Project several models' fragment matrices into one shared plane.

    ``groups`` rows carry {"modelId", "relation", "matrix"}; the projection is
    fitted on all fragments stacked so the models share axes.
    """
    if not groups:
        raise ValueError("nothing to project")
    stacked = np.concatenate([np.asarray(g["matrix"], dtype=np.float64) for g in groups])
    coords, ratio = pca_project(stacked, n_components)
    out_groups = []
    offset = 0
    for g in groups:
        count = len(g["matrix"])
        pts = coords[offset : offset + count]
        offset += count
        out_groups.append(
            {
                "modelId": g["modelId"],
                "relation": g["relation"],
                "points": [[float(a) for a in row] for row in pts],
            }
        )
    return {
        "formatVersion": VIZ_FORMAT_VERSION,
        "projection": "pca",
        "components": n_components,
        "explainedVarianceRatio": [float(r) for r in ratio],
        "models": out_groups,
    }
