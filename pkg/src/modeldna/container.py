"""Binary container used by checkpoint and fingerprint files.

Layout, in order:

  bytes 0..8    header length ``H`` as a little-endian unsigned 64-bit int
  bytes 8..8+H  UTF-8 JSON header
  remainder     the raw ``float32`` little-endian arrays, concatenated in
                the order listed by the header's ``arrays`` entry

The header's ``arrays`` entry is a list of ``{"name": str, "shape": [int]}``
records; every other header key belongs to the caller (formatVersion,
arch, lineage, ...). Loading is strict: a short file, malformed JSON, or a
payload whose byte count disagrees with the declared shapes raises
``ContainerError`` rather than truncating silently.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Sequence

import numpy as np

_LEN_STRUCT = struct.Struct("<Q")
_DTYPE = np.dtype("<f4")


class ContainerError(RuntimeError):
    """Raised for corrupt or malformed container files."""


class UnsupportedVersionError(RuntimeError):
    """Raised when a container declares a formatVersion we cannot read."""


def write_container(
    path: Path | str,
    header: dict[str, Any],
    arrays: Sequence[tuple[str, np.ndarray]],
) -> bytes:
    """Serialize ``header`` plus named float32 arrays; returns the bytes written."""
    data = container_bytes(header, arrays)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return data


def container_bytes(
    header: dict[str, Any], arrays: Sequence[tuple[str, np.ndarray]]
) -> bytes:
    full_header = dict(header)
    full_header["arrays"] = [
        {"name": name, "shape": list(arr.shape)} for name, arr in arrays
    ]
    header_bytes = json.dumps(full_header, sort_keys=True).encode("utf-8")
    chunks = [_LEN_STRUCT.pack(len(header_bytes)), header_bytes]
    for _, arr in arrays:
        chunks.append(np.ascontiguousarray(arr, dtype=_DTYPE).tobytes())
    return b"".join(chunks)


def read_container(path: Path | str) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
    """Parse a container file into (header, name -> float32 array)."""
    raw = Path(path).read_bytes()
    if len(raw) < _LEN_STRUCT.size:
        raise ContainerError(f"{path}: file too short for a container header")
    (header_len,) = _LEN_STRUCT.unpack_from(raw, 0)
    body_start = _LEN_STRUCT.size + header_len
    if header_len == 0 or body_start > len(raw):
        raise ContainerError(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(raw[_LEN_STRUCT.size : body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: malformed JSON header: {exc}") from exc
    if not isinstance(header, dict) or "arrays" not in header:
        raise ContainerError(f"{path}: header is missing the 'arrays' entry")

    arrays: dict[str, np.ndarray] = {}
    offset = body_start
    for entry in header["arrays"]:
        try:
            name, shape = entry["name"], tuple(int(s) for s in entry["shape"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ContainerError(f"{path}: malformed array entry {entry!r}") from exc
        nbytes = int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize
        if offset + nbytes > len(raw):
            raise ContainerError(
                f"{path}: array '{name}' declared {nbytes} bytes but only "
                f"{len(raw) - offset} remain (truncated payload)"
            )
        flat = np.frombuffer(raw, dtype=_DTYPE, count=int(np.prod(shape, dtype=np.int64)), offset=offset)
        arrays[name] = flat.reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise ContainerError(
            f"{path}: {len(raw) - offset} unexpected trailing bytes after payload"
        )
    return header, arrays
