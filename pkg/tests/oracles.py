"""Naive pure-python reimplementations of the objective terms.

Everything here is written with explicit loops over math.* scalar calls so it
shares no code path with the package; the test suite treats these as ground
truth for the vectorized implementations.
"""

from __future__ import annotations

import math

import numpy as np


def naive_cos(u, v) -> float:
    nu = math.sqrt(sum(float(a) * float(a) for a in u))
    nv = math.sqrt(sum(float(b) * float(b) for b in v))
    dot = sum(float(a) * float(b) for a, b in zip(u, v))
    return dot / (nu * nv)


def _logsumexp(values) -> float:
    m = max(values)
    return m + math.log(sum(math.exp(v - m) for v in values))


def naive_similarity(o_s, o_t, o_bar, tau, include_positive=False) -> float:
    n = len(o_s)
    total = 0.0
    for i in range(n):
        pos = naive_cos(o_s[i], o_t[i]) / tau
        terms = [naive_cos(o_s[i], o_bar[k]) / tau for k in range(n)]
        if include_positive:
            terms = terms + [pos]
        total += _logsumexp(terms) - pos
    return total


def naive_intra(o_s, o_t, o_bar, tau) -> float:
    n = len(o_s)
    total = 0.0
    for i in range(n):
        for k in range(n):
            if i == k:
                continue
            inner = (
                math.exp(naive_cos(o_s[i], o_s[k]) / tau)
                + math.exp(naive_cos(o_t[i], o_t[k]) / tau)
                + math.exp(naive_cos(o_bar[i], o_bar[k]) / tau)
            )
            total += -math.log(inner)
    return total


def naive_weight_norm(params: dict[str, np.ndarray]) -> float:
    sq = 0.0
    for arr in params.values():
        for v in np.asarray(arr, dtype=np.float64).reshape(-1):
            sq += float(v) * float(v)
    return math.sqrt(sq)


def naive_bce(scores, labels, clamp=1e-7) -> float:
    total = 0.0
    for p, y in zip(scores, labels):
        p = min(max(float(p), clamp), 1.0 - clamp)
        y = float(y)
        total += -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))
    return total / len(scores)


def random_fragment_sets(rng: np.random.Generator):
    """One random (o_s, o_t, o_bar) batch with 1..8 rows and 2..16 columns."""
    n = int(rng.integers(1, 9))
    d = int(rng.integers(2, 17))
    return (
        rng.normal(size=(n, d)),
        rng.normal(size=(n, d)),
        rng.normal(size=(n, d)),
    )
