"""Canonical JSON and content hashes for configs, surfaces and reports."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json

import numpy as np


def _default(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return dataclasses.asdict(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def canonical_json(obj, indent: int | None = None) -> str:
    """JSON with sorted keys; compact unless ``indent`` is given."""
    if indent is None:
        return json.dumps(obj, default=_default, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return json.dumps(obj, default=_default, sort_keys=True, indent=indent, allow_nan=False) + "\n"


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]
