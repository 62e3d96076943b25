"""Structure databases: JSON-lines files of tagged reference structures.

One record per line::

    {"id": "...", "lattice": [[...]x3], "species": [...],
     "frac_coords": [[...]], "tags": {...}, "schema_version": 1}

``schema_version`` is optional and defaults to the current version. Loading
is total: the first malformed line aborts with its line number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import CrystalStructure

SCHEMA_VERSION = 1


class DatabaseError(ValueError):
    """Database file rejected; message carries the offending line number."""


@dataclass(frozen=True)
class StructureRecord:
    id: str
    structure: CrystalStructure
    tags: dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {"id": self.id, "schema_version": SCHEMA_VERSION}
        d.update(self.structure.as_dict())
        d["tags"] = dict(self.tags)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StructureRecord":
        return cls(
            id=str(d["id"]),
            structure=CrystalStructure.from_dict(d),
            tags={str(k): str(v) for k, v in d.get("tags", {}).items()},
        )


def load_database(path: str | Path) -> list[StructureRecord]:
    """Load and validate all records; duplicate ids and bad lines are errors."""
    records: list[StructureRecord] = []
    seen: set[str] = set()
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatabaseError(f"line {line_no}: invalid JSON ({exc.msg})") from None
            version = raw.get("schema_version", SCHEMA_VERSION)
            if version != SCHEMA_VERSION:
                raise DatabaseError(
                    f"line {line_no}: unsupported schema_version {version}"
                )
            try:
                rec = StructureRecord.from_dict(raw)
            except (KeyError, ValueError, TypeError) as exc:
                raise DatabaseError(f"line {line_no}: {exc}") from None
            if rec.id in seen:
                raise DatabaseError(f"line {line_no}: duplicate id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


def write_database(records: list[StructureRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.as_dict()) + "\n")
