"""Stable structured report rendering.

Reports are JSON documents with deterministic key order and no timestamps,
so a fixed configuration and seed reproduce the output byte for byte.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np


def sanitize(obj):
    """Convert numpy scalars/arrays and tuples to plain JSON-able values."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def render(report: dict) -> str:
    return json.dumps(sanitize(report), indent=2) + "\n"


def config_hash(canonical: dict) -> str:
    blob = json.dumps(sanitize(canonical), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def stable_stream_key(name: str) -> int:
    """Deterministic 32-bit stream id for a named RNG substream."""
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4],
                          "big")
