"""Shared helpers: seed derivation, canonical JSON, hashing."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path | str) -> str:
    return sha256_hex(Path(path).read_bytes())


def derive_seed(base_seed: int, *parts: object) -> int:
    """Stable 32-bit seed for a named sub-stream of a base seed.

    Keeps every stochastic step (model init, shuffling, pair sampling)
    on its own stream so stages can rerun in any order with identical
    results.
    """
    tag = f"{base_seed}|" + "/".join(str(p) for p in parts)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def jsonable(value: Any) -> Any:
    """Recursively convert numpy scalars/arrays to plain Python types."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def canonical_json(obj: Any) -> str:
    """Compact, key-sorted JSON used for content hashing."""
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"))


def write_json(path: Path | str, obj: Any) -> Path:
    """Write UTF-8 JSON with stable key ordering (reports contract)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"
    path.write_text(text, encoding="utf-8")
    return path


def read_json(path: Path | str) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))
