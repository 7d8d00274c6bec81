"""Writers for the MVCV view format and the dataset manifest.

The byte layout matches the mvclust loader: magic "MVCV", version u16=1,
two reserved zero bytes, n and d as little-endian u64, then n*d float32
values row-major. The manifest is the JSON schema mvclust consumes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_MAGIC = b"MVCV"
_HEADER = struct.Struct("<4sHHQQ")


def write_view(data: np.ndarray, path) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
        raise ValueError(f"view must be an n x d matrix, got shape {data.shape}")
    if not np.isfinite(data).all():
        raise ValueError("view contains non-finite values")
    n, d = data.shape
    header = _HEADER.pack(_MAGIC, 1, 0, n, d)
    Path(path).write_bytes(header + data.astype("<f4").tobytes(order="C"))


def write_manifest(name: str, views: list[dict], sample_ids_path: str, methods: dict, path) -> None:
    doc = {
        "name": name,
        "views": views,
        "sample_ids_path": sample_ids_path,
        "seed": 0,
        "methods": methods,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
