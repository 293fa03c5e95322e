"""Binary field files with JSON sidecars, and small serialization helpers.

Layout of a field file: a 16-byte header (``b"FHF1"``, ``uint16`` rank, five
``uint16`` axis lengths padded with zeros), then little-endian ``float64``
values in row-major order. The sidecar ``<path>.json`` holds metadata.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import DomainError

__all__ = ["MAGIC", "write_field", "read_field", "dumps", "write_json", "to_jsonable"]

MAGIC = b"FHF1"
_MAX_RANK = 5
_HEADER = struct.Struct("<4sH5H")


def to_jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_field(path, values: np.ndarray, metadata: dict | None = None) -> Path:
    path = Path(path)
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim > _MAX_RANK or values.ndim == 0:
        raise DomainError(f"field rank must be between 1 and {_MAX_RANK}")
    if any(s >= 2**16 for s in values.shape):
        raise DomainError("axis lengths must fit in 16 bits")
    counts = list(values.shape) + [0] * (_MAX_RANK - values.ndim)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, values.ndim, *counts))
        fh.write(values.tobytes(order="C"))
    write_json(_sidecar(path), metadata or {})
    return path


def read_field(path):
    """Return ``(values, metadata)``; metadata is ``{}`` when the sidecar is missing."""
    path = Path(path)
    raw = path.read_bytes()
    magic, rank, *counts = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DomainError(f"{path} is not a field file")
    shape = tuple(counts[:rank])
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(shape).copy()
    side = _sidecar(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    return values, meta
