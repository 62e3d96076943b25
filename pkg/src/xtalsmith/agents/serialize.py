"""Lossless JSON round-tripping for values that cross the event log.

Step results are persisted in event-sourced form, and later steps read
their inputs back from that form, so serialize/deserialize must be exact
inverses for every value a tool can produce.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..core import Composition, CrystalStructure
from ..database import StructureRecord


def to_jsonable(value):
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, float):
        return value
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return [to_jsonable(x) for x in value.tolist()]
    if isinstance(value, CrystalStructure):
        return {"$structure": value.as_dict()}
    if isinstance(value, StructureRecord):
        return {"$record": value.as_dict()}
    if isinstance(value, Composition):
        return {"$composition": value.as_dict()}
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [to_jsonable(x) for x in value]
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    raise TypeError(f"cannot serialize value of type {type(value).__name__}")


def from_jsonable(value):
    if isinstance(value, list):
        return [from_jsonable(x) for x in value]
    if isinstance(value, dict):
        if set(value) == {"$structure"}:
            return CrystalStructure.from_dict(value["$structure"])
        if set(value) == {"$record"}:
            return StructureRecord.from_dict(value["$record"])
        if set(value) == {"$composition"}:
            return Composition.from_dict(value["$composition"])
        return {k: from_jsonable(v) for k, v in value.items()}
    return value
