"""Composition-similarity retrieval and prototype substitution.

Candidate generation walks a tiered ranking (exact reduced formula, then
same stoichiometry with chemically close elements, then element overlap),
relabels prototype sites onto the target composition, and rescales the
cell isotropically from covalent-radius volumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

from .core import (
    Composition,
    CrystalStructure,
    Lattice,
    anonymous_formula,
    reduced_formula,
    stoichiometry_multiset,
)
from .database import StructureRecord
from .elements import get_element
from .matcher import DEFAULT_TOLERANCES, MatchTolerances, match


class SubstitutionError(ValueError):
    """Prototype and target stoichiometries are incompatible."""


@dataclass(frozen=True)
class StructureIndex:
    records: tuple[StructureRecord, ...]
    by_reduced_formula: dict[str, tuple[int, ...]] = field(default_factory=dict)
    by_anonymous_formula: dict[str, tuple[int, ...]] = field(default_factory=dict)
    by_element_set: dict[frozenset, tuple[int, ...]] = field(default_factory=dict)


def build_index(records: list[StructureRecord]) -> StructureIndex:
    by_red: dict[str, list[int]] = {}
    by_anon: dict[str, list[int]] = {}
    by_elems: dict[frozenset, list[int]] = {}
    for i, rec in enumerate(records):
        comp = rec.structure.composition
        by_red.setdefault(reduced_formula(comp), []).append(i)
        by_anon.setdefault(anonymous_formula(comp), []).append(i)
        by_elems.setdefault(frozenset(comp.elements), []).append(i)
    return StructureIndex(
        records=tuple(records),
        by_reduced_formula={k: tuple(v) for k, v in by_red.items()},
        by_anonymous_formula={k: tuple(v) for k, v in by_anon.items()},
        by_element_set={k: tuple(v) for k, v in by_elems.items()},
    )


def _element_distance(a: str, b: str) -> float:
    ea, eb = get_element(a), get_element(b)
    en_a = ea.electronegativity if ea.electronegativity is not None else 0.0
    en_b = eb.electronegativity if eb.electronegativity is not None else 0.0
    return abs(en_a - en_b) + abs(ea.z - eb.z) / 20.0


def _count_groups(comp: Composition) -> dict[int, list[str]]:
    groups: dict[int, list[str]] = {}
    for sym, n in comp.reduced().counts:
        groups.setdefault(n, []).append(sym)
    return groups


def _mappings(source: Composition, target: Composition):
    """All element bijections that preserve reduced stoichiometry."""
    sg, tg = _count_groups(source), _count_groups(target)
    if sorted(sg) != sorted(tg) or any(len(sg[n]) != len(tg[n]) for n in sg):
        return
    counts = sorted(sg)
    pools = [list(permutations(tg[n])) for n in counts]

    def rec(level, acc):
        if level == len(counts):
            yield dict(acc)
            return
        n = counts[level]
        for perm in pools[level]:
            yield from rec(level + 1, acc + list(zip(sg[n], perm)))

    yield from rec(0, [])


def substitution_score(source: Composition, target: Composition) -> float | None:
    """Minimal summed element distance over stoichiometry-preserving maps."""
    best = None
    for mapping in _mappings(source, target):
        score = sum(_element_distance(a, b) for a, b in mapping.items())
        if best is None or score < best:
            best = score
    return best


def best_mapping(source: Composition, target: Composition) -> dict[str, str]:
    best = None
    best_score = None
    for mapping in _mappings(source, target):
        score = sum(_element_distance(a, b) for a, b in mapping.items())
        key = (score, tuple(sorted(mapping.items())))
        if best_score is None or key < best_score:
            best_score = key
            best = mapping
    if best is None:
        raise SubstitutionError(
            f"stoichiometry mismatch: {reduced_formula(source)} cannot map onto "
            f"{reduced_formula(target)}"
        )
    return best


def query_similar(
    c: Composition, index: StructureIndex, k: int
) -> list[StructureRecord]:
    """Ranked retrieval: exact formula, then substitutable, then overlap."""
    if k < 1:
        raise ValueError("k must be >= 1")
    target_red = reduced_formula(c)
    target_anon = anonymous_formula(c)
    target_elems = set(c.elements)

    ranked: list[int] = []
    seen: set[int] = set()

    tier1 = sorted(
        index.by_reduced_formula.get(target_red, ()),
        key=lambda i: index.records[i].id,
    )
    for i in tier1:
        ranked.append(i)
        seen.add(i)

    tier2 = []
    for i in index.by_anonymous_formula.get(target_anon, ()):
        if i in seen:
            continue
        score = substitution_score(index.records[i].structure.composition, c)
        if score is not None:
            tier2.append((score, index.records[i].id, i))
    for _, _, i in sorted(tier2):
        ranked.append(i)
        seen.add(i)

    tier3 = []
    for elems, idxs in index.by_element_set.items():
        overlap = len(elems & target_elems)
        if overlap == 0:
            continue
        jaccard = overlap / len(elems | target_elems)
        for i in idxs:
            if i not in seen:
                tier3.append((-jaccard, index.records[i].id, i))
    for _, _, i in sorted(tier3):
        ranked.append(i)

    return [index.records[i] for i in ranked[:k]]


def substitute(prototype: StructureRecord, target: Composition) -> CrystalStructure:
    """Relabel prototype sites onto the target composition.

    Fractional coordinates are preserved exactly; the lattice is rescaled
    isotropically by the cube root of the covalent-radius volume ratio.
    """
    proto_struct = prototype.structure
    proto_comp = proto_struct.composition
    if stoichiometry_multiset(proto_comp) != stoichiometry_multiset(target):
        raise SubstitutionError(
            f"prototype {reduced_formula(proto_comp)} and target "
            f"{reduced_formula(target)} have different stoichiometry"
        )
    mapping = best_mapping(proto_comp, target)
    new_species = [mapping[sym] for sym in proto_struct.species]

    def radius_volume(symbols):
        return sum(get_element(sym).covalent_radius ** 3 for sym in symbols)

    factor = (radius_volume(new_species) / radius_volume(proto_struct.species)) ** (
        1.0 / 3.0
    )
    return CrystalStructure.build(
        new_species,
        proto_struct.frac_array,
        Lattice.from_matrix(proto_struct.lattice.matrix * factor),
    )


def generate_candidates(
    c: Composition,
    index: StructureIndex,
    m: int,
    tol: MatchTolerances = DEFAULT_TOLERANCES,
) -> list[CrystalStructure]:
    """Top-m substitutable prototypes, substituted and deduplicated."""
    if m < 1:
        raise ValueError("m must be >= 1")
    ranked = query_similar(c, index, k=len(index.records) or 1)
    target_multiset = stoichiometry_multiset(c)
    candidates: list[CrystalStructure] = []
    for rec in ranked:
        if stoichiometry_multiset(rec.structure.composition) != target_multiset:
            continue
        candidates.append(substitute(rec, c))
        if len(candidates) == m:
            break
    unique: list[CrystalStructure] = []
    for cand in candidates:
        if not any(match(cand, kept, tol).matched for kept in unique):
            unique.append(cand)
    return unique
