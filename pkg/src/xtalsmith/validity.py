"""Structural and compositional plausibility checks.

Structural: no interatomic distance below 0.5 angstrom (periodic images
included) and cell volume at least 0.1 cubic angstrom. Compositional: a
charge-neutral assignment of common oxidation states must exist in which
no cation is more electronegative than any anion.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .core import Composition, CrystalStructure, pairwise_min_distance
from .elements import get_element

MIN_INTERATOMIC_DISTANCE = 0.5  # angstrom
MIN_CELL_VOLUME = 0.1  # cubic angstrom

#: Exhaustive-search guard for the oxidation-state enumeration.
MAX_DISTINCT_ELEMENTS = 6


class ElementCountGuardError(ValueError):
    """Composition has too many distinct elements for exhaustive search.

    Deliberately distinct from an "invalid" verdict: the check was refused,
    not failed.
    """


@dataclass(frozen=True)
class ValidityReport:
    structural_ok: bool
    min_distance: float
    volume: float
    compositional_ok: bool
    neutral_assignments: tuple[dict[str, int], ...]


def structural_validity(s: CrystalStructure) -> tuple[bool, float, float]:
    """(ok, min_distance, volume); ok iff distance and volume thresholds hold."""
    dmin = pairwise_min_distance(s)
    vol = s.volume
    return (
        dmin >= MIN_INTERATOMIC_DISTANCE and vol >= MIN_CELL_VOLUME,
        dmin,
        vol,
    )


def charge_neutral_assignments(c: Composition) -> list[dict[str, int]]:
    """All common-oxidation-state assignments with zero weighted sum.

    One state per element; single-element compositions get the all-zero
    assignment by convention (elemental crystals are neutral).
    """
    counts = c.reduced().as_dict()
    elements = sorted(counts)
    if len(elements) > MAX_DISTINCT_ELEMENTS:
        raise ElementCountGuardError(
            f"{len(elements)} distinct elements exceeds the guard of "
            f"{MAX_DISTINCT_ELEMENTS}"
        )
    if len(elements) == 1:
        return [{elements[0]: 0}]
    state_sets = [get_element(el).oxidation_states for el in elements]
    found = []
    for combo in product(*state_sets):
        if sum(counts[el] * st for el, st in zip(elements, combo)) == 0:
            found.append(dict(zip(elements, combo)))
    return found


def _electronegativity_ordered(assignment: dict[str, int]) -> bool:
    cations = [el for el, st in assignment.items() if st > 0]
    anions = [el for el, st in assignment.items() if st < 0]
    if not cations or not anions:
        return True
    def en(el):
        val = get_element(el).electronegativity
        return val if val is not None else float("inf")
    return max(en(el) for el in cations) <= min(en(el) for el in anions)


def compositional_validity(c: Composition) -> bool:
    """True iff some neutral assignment also passes the electronegativity test."""
    return any(
        _electronegativity_ordered(a) for a in charge_neutral_assignments(c)
    )


def validity_report(s: CrystalStructure) -> ValidityReport:
    ok, dmin, vol = structural_validity(s)
    assignments = charge_neutral_assignments(s.composition)
    comp_ok = any(_electronegativity_ordered(a) for a in assignments)
    return ValidityReport(
        structural_ok=ok,
        min_distance=dmin,
        volume=vol,
        compositional_ok=comp_ok,
        neutral_assignments=tuple(assignments),
    )
