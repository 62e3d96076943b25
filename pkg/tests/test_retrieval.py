import numpy as np
import pytest

from xtalsmith.core import (
    Composition,
    CrystalStructure,
    Lattice,
    anonymous_formula,
    reduced_formula,
)
from xtalsmith.database import StructureRecord, load_database
from xtalsmith.retrieval import (
    SubstitutionError,
    best_mapping,
    build_index,
    generate_candidates,
    query_similar,
    substitute,
    substitution_score,
)

from conftest import FIXTURES, make_rocksalt


@pytest.fixture
def csp_records():
    return load_database(FIXTURES / "csp_db.jsonl")


@pytest.fixture
def csp_index(csp_records):
    return build_index(csp_records)


def test_empty_index():
    idx = build_index([])
    assert idx.records == ()
    assert query_similar(Composition.from_formula("NaCl"), idx, 3) == []


def test_index_buckets(csp_index):
    assert len(csp_index.by_anonymous_formula["AB"]) == 2  # NaCl + KBr
    for bucket_map in (
        csp_index.by_reduced_formula,
        csp_index.by_anonymous_formula,
        csp_index.by_element_set,
    ):
        reachable = {i for idxs in bucket_map.values() for i in idxs}
        assert reachable == set(range(len(csp_index.records)))


def test_index_matches_linear_scan(csp_index, csp_records):
    target = Composition.from_formula("NaCl")
    expect = [
        i
        for i, r in enumerate(csp_records)
        if reduced_formula(r.structure.composition) == "NaCl"
    ]
    assert list(csp_index.by_reduced_formula["NaCl"]) == expect


def test_query_exact_formula_first(csp_index):
    hits = query_similar(Composition.from_formula("NaCl"), csp_index, 3)
    assert hits[0].id == "nacl-rocksalt"


def test_query_substitutable_before_overlap(csp_index):
    hits = query_similar(Composition.from_formula("Ba2Fe2F9"), csp_index, 5)
    assert hits[0].id == "proto-srcof"  # same anonymous formula A9B2C2
    ids = [h.id for h in hits]
    assert ids.index("proto-srcof") < ids.index("proto-na3alf6")


def test_query_k_larger_than_db(csp_index):
    # exact formula, then the substitutable AB prototype, then element
    # overlap; the rest of the database never ranks, and there is no padding
    hits = query_similar(Composition.from_formula("NaCl"), csp_index, 50)
    assert [h.id for h in hits] == ["nacl-rocksalt", "kbr-rocksalt", "proto-na3alf6"]


def test_query_deterministic_under_shuffle(csp_records):
    rng = np.random.default_rng(0)
    target = Composition.from_formula("Ba2Fe2F9")
    ref = [r.id for r in query_similar(target, build_index(csp_records), 5)]
    for _ in range(5):
        shuffled = list(csp_records)
        rng.shuffle(shuffled)
        ids = [r.id for r in query_similar(target, build_index(shuffled), 5)]
        assert ids == ref


# --- substitution --------------------------------------------------------------


def test_substitute_maps_by_chemical_proximity(csp_records):
    proto = next(r for r in csp_records if r.id == "proto-srcof")
    target = Composition.from_formula("Ba2Fe2F9")
    mapping = best_mapping(proto.structure.composition, target)
    assert mapping == {"Sr": "Ba", "Co": "Fe", "F": "F"}
    out = substitute(proto, target)
    assert reduced_formula(out.composition) == "Ba2Fe2F9"
    assert np.allclose(out.frac_array, proto.structure.frac_array)
    assert anonymous_formula(out.composition) == anonymous_formula(
        proto.structure.composition
    )


def test_substitute_identity_is_unit_scale(rocksalt):
    rec = StructureRecord("x", rocksalt, {})
    out = substitute(rec, rocksalt.composition)
    assert np.allclose(out.lattice.matrix, rocksalt.lattice.matrix)
    assert out.species == rocksalt.species


def test_substitute_kbr_to_nacl_by_proximity():
    kbr = StructureRecord("kbr", make_rocksalt(6.6, "K", "Br"), {})
    out = substitute(kbr, Composition.from_formula("NaCl"))
    # enumeration oracle over the two possible bijections:
    # (K->Na, Br->Cl) score = |0.82-0.93|+8/20 + |2.96-3.16|+18/20 = 1.61
    # (K->Cl, Br->Na) score = |0.82-3.16|+2/20 + |2.96-0.93|+24/20 = 5.67
    s1 = substitution_score(
        Composition.from_formula("KBr"), Composition.from_formula("NaCl")
    )
    assert s1 == pytest.approx(1.61, abs=1e-9)
    assert out.species[:4] == ("Na",) * 4  # K sites relabeled to Na
    assert out.species[4:] == ("Cl",) * 4
    # cell shrinks toward the smaller radii
    assert out.lattice.volume < kbr.structure.volume


def test_substitute_stoichiometry_mismatch(csp_records):
    proto = next(r for r in csp_records if r.id == "proto-na3alf6")
    with pytest.raises(SubstitutionError):
        substitute(proto, Composition.from_formula("Ba2Fe2F9"))


# --- candidate generation ---------------------------------------------------------


def test_generate_candidates_single_compatible(csp_index):
    out = generate_candidates(Composition.from_formula("Ba2Fe2F9"), csp_index, 5)
    assert len(out) == 1
    assert reduced_formula(out[0].composition) == "Ba2Fe2F9"


def test_generate_candidates_dedups(rocksalt):
    records = [
        StructureRecord("a", rocksalt, {}),
        StructureRecord("b", rocksalt, {}),
        StructureRecord("c", make_rocksalt(5.7), {}),
    ]
    out = generate_candidates(Composition.from_formula("NaCl"), build_index(records), 5)
    assert len(out) == 1


def test_generated_compositions_always_match_target(csp_index):
    rng = np.random.default_rng(1)
    for formula in ["NaCl", "KBr", "BaF2", "Ba2Fe2F9"]:
        target = Composition.from_formula(formula)
        for cand in generate_candidates(target, csp_index, 4):
            assert reduced_formula(cand.composition) == reduced_formula(target)


def test_generate_candidates_empty_when_no_prototype(csp_index):
    out = generate_candidates(Composition.from_formula("Mg2SiO4"), csp_index, 3)
    assert out == []
