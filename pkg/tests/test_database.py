import json

import numpy as np
import pytest

from xtalsmith.core import CrystalStructure, Lattice
from xtalsmith.database import (
    DatabaseError,
    StructureRecord,
    load_database,
    write_database,
)

from conftest import make_rocksalt


def record(i, a=5.64):
    return StructureRecord(f"rec-{i}", make_rocksalt(a), {"source": "test"})


def test_empty_file(tmp_path):
    path = tmp_path / "db.jsonl"
    path.write_text("")
    assert load_database(path) == []


def test_roundtrip_preserves_ids_and_order(tmp_path):
    path = tmp_path / "db.jsonl"
    records = [record(i, 5.0 + i * 0.1) for i in range(3)]
    write_database(records, path)
    loaded = load_database(path)
    assert [r.id for r in loaded] == ["rec-0", "rec-1", "rec-2"]
    assert loaded[0].tags == {"source": "test"}
    assert np.allclose(
        loaded[1].structure.frac_array, records[1].structure.frac_array
    )


def test_coordinates_wrapped_on_load(tmp_path):
    path = tmp_path / "db.jsonl"
    raw = {
        "id": "x",
        "lattice": [[4, 0, 0], [0, 4, 0], [0, 0, 4]],
        "species": ["Na"],
        "frac_coords": [[1.2, 0.0, 0.0]],
        "tags": {},
    }
    path.write_text(json.dumps(raw) + "\n")
    loaded = load_database(path)
    assert np.allclose(loaded[0].structure.frac_array, [[0.2, 0, 0]])


def test_duplicate_id_rejected_with_line(tmp_path):
    path = tmp_path / "db.jsonl"
    write_database([record(1), record(1)], path)
    with pytest.raises(DatabaseError, match="line 2: duplicate id"):
        load_database(path)


def test_schema_violation_positioned(tmp_path):
    path = tmp_path / "db.jsonl"
    good = json.dumps(record(0).as_dict())
    path.write_text(good + "\n" + '{"id": "bad"}' + "\n")
    with pytest.raises(DatabaseError, match="line 2"):
        load_database(path)


def test_invalid_json_positioned(tmp_path):
    path = tmp_path / "db.jsonl"
    path.write_text('{"id": "a"\n')
    with pytest.raises(DatabaseError, match="line 1: invalid JSON"):
        load_database(path)


def test_unsupported_schema_version(tmp_path):
    path = tmp_path / "db.jsonl"
    raw = record(0).as_dict()
    raw["schema_version"] = 99
    path.write_text(json.dumps(raw) + "\n")
    with pytest.raises(DatabaseError, match="schema_version"):
        load_database(path)
