"""Convex-hull phase stability over composition space.

Entries are (composition, energy per atom) points. The hull is the lower
convex envelope over barycentric composition coordinates; the distance of
an entry above that envelope is its decomposition driving force. Systems
of up to four elements are supported (binary hulls via the monotone-chain
construction, ternary/quaternary via exhaustive lower-facet search).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .core import Composition

MAX_HULL_ELEMENTS = 4
_SUPPORT_EPS = 1e-9


class MissingElementalReferenceError(ValueError):
    """Hull input lacks an elemental entry for one of its elements."""


class HullDomainError(ValueError):
    """Queried composition contains elements outside the hull element set."""


@dataclass(frozen=True)
class HullEntry:
    composition: Composition
    energy_per_atom: float

    def __post_init__(self):
        if not np.isfinite(self.energy_per_atom):
            raise ValueError("energy_per_atom must be finite")


@dataclass(frozen=True)
class HullFacet:
    """Supporting simplex: vertex compositions (barycentric) and energies.

    ``plane`` holds affine coefficients (a_1..a_{d-1}, b) over the first
    d-1 barycentric coordinates.
    """

    vertices: tuple[tuple[tuple[float, ...], float], ...]
    plane: tuple[float, ...]


@dataclass(frozen=True)
class PhaseHull:
    elements: tuple[str, ...]
    facets: tuple[HullFacet, ...]
    entries: tuple[HullEntry, ...]

    def composition_vector(self, c: Composition) -> np.ndarray:
        frac = c.fractional()
        extra = set(frac) - set(self.elements)
        if extra:
            raise HullDomainError(
                f"composition contains elements outside the hull: {sorted(extra)}"
            )
        return np.array([frac.get(el, 0.0) for el in self.elements])

    def energy_at(self, c: Composition) -> float:
        """Hull energy per atom at a composition (max over supporting planes)."""
        x = self.composition_vector(c)
        u = x[:-1]
        best = -np.inf
        for facet in self.facets:
            coeffs = np.asarray(facet.plane)
            val = float(coeffs[:-1] @ u + coeffs[-1])
            if val > best:
                best = val
        return best

    def vertex_compositions(self) -> set[tuple[float, ...]]:
        out = set()
        for facet in self.facets:
            for coords, _ in facet.vertices:
                out.add(coords)
        return out


def _lower_hull_binary(points: np.ndarray) -> list[tuple[int, int]]:
    """Indices of consecutive lower-hull vertices of (x, E) points."""
    order = sorted(range(len(points)), key=lambda i: (points[i, 0], points[i, 1]))
    # one point per x: the lowest
    dedup: list[int] = []
    for i in order:
        if dedup and abs(points[dedup[-1], 0] - points[i, 0]) < 1e-12:
            continue
        dedup.append(i)
    hull: list[int] = []
    for i in dedup:
        while len(hull) >= 2:
            (x1, e1), (x2, e2) = points[hull[-2]], points[hull[-1]]
            x3, e3 = points[i]
            if (x2 - x1) * (e3 - e1) - (x3 - x1) * (e2 - e1) <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return [(hull[k], hull[k + 1]) for k in range(len(hull) - 1)]


def build_hull(entries: list[HullEntry]) -> PhaseHull:
    """Lower convex hull; requires an elemental reference for every element."""
    elements = sorted({el for e in entries for el in e.composition.elements})
    if len(elements) > MAX_HULL_ELEMENTS:
        raise ValueError(
            f"{len(elements)} elements exceeds the supported maximum of "
            f"{MAX_HULL_ELEMENTS}"
        )
    have_refs = {
        e.composition.elements[0]
        for e in entries
        if len(e.composition.elements) == 1
    }
    missing = [el for el in elements if el not in have_refs]
    if missing:
        raise MissingElementalReferenceError(
            f"missing elemental reference entries for: {', '.join(missing)}"
        )

    d = len(elements)
    xs = np.array(
        [[e.composition.fractional().get(el, 0.0) for el in elements] for e in entries]
    )
    es = np.array([e.energy_per_atom for e in entries])
    scale = max(1.0, float(np.max(np.abs(es))))

    facets: list[HullFacet] = []
    if d == 1:
        i = int(np.argmin(es))
        facets.append(
            HullFacet(
                vertices=((tuple(xs[i]), float(es[i])),),
                plane=(float(es[i]),),
            )
        )
    elif d == 2:
        # plane coordinates use the first barycentric component, matching
        # the general-dimension convention in energy_at
        pts = np.column_stack([xs[:, 0], es])
        for i, j in _lower_hull_binary(pts):
            u1, e1 = pts[i]
            u2, e2 = pts[j]
            a = (e2 - e1) / (u2 - u1)
            b = e1 - a * u1
            facets.append(
                HullFacet(
                    vertices=(
                        (tuple(xs[i]), float(es[i])),
                        (tuple(xs[j]), float(es[j])),
                    ),
                    plane=(float(a), float(b)),
                )
            )
    else:
        us = xs[:, :-1]
        n = len(entries)
        for subset in combinations(range(n), d):
            A = np.column_stack([us[list(subset)], np.ones(d)])
            rhs = es[list(subset)]
            try:
                coeffs = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.max(np.abs(coeffs)) > 1e8:
                continue  # nearly vertical plane
            values = us @ coeffs[:-1] + coeffs[-1]
            if np.all(es - values >= -_SUPPORT_EPS * scale):
                verts = tuple(
                    sorted((tuple(xs[k]), float(es[k])) for k in subset)
                )
                facets.append(HullFacet(vertices=verts, plane=tuple(coeffs)))

    facets_sorted = tuple(sorted(set(facets), key=lambda f: f.vertices))
    return PhaseHull(
        elements=tuple(elements), facets=facets_sorted, entries=tuple(entries)
    )


def energy_above_hull(entry: HullEntry, hull: PhaseHull) -> float:
    """Signed height of the entry above the hull envelope (eV/atom)."""
    return entry.energy_per_atom - hull.energy_at(entry.composition)


@dataclass(frozen=True)
class StabilityFlags:
    stable: bool
    metastable_0_1: bool
    metastable_0_03: bool


def classify_stability(e_hull: float, c: Composition) -> StabilityFlags:
    """Stability demands e_hull < 0 and at least two distinct elements.

    The metastability thresholds (0.1 and 0.03 eV/atom) are pure energy
    cuts with no element-count condition.
    """
    if not np.isfinite(e_hull):
        raise ValueError("e_hull must be finite")
    multi = len(c.reduced().elements) >= 2
    return StabilityFlags(
        stable=bool(e_hull < 0.0 and multi),
        metastable_0_1=bool(e_hull < 0.1),
        metastable_0_03=bool(e_hull < 0.03),
    )


def load_hull_entries(path: str) -> list[HullEntry]:
    """Read a JSONL reference-hull file.

    Each line: ``{"composition": "NaCl" | {"Na": 1, "Cl": 1},
    "energy_per_atom": -2.0}``.
    """
    import json

    entries = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            raw = json.loads(line)
            comp = raw["composition"]
            if isinstance(comp, str):
                composition = Composition.from_formula(comp)
            else:
                composition = Composition.from_dict(
                    {k: int(v) for k, v in comp.items()}
                )
            entries.append(
                HullEntry(
                    composition=composition,
                    energy_per_atom=float(raw["energy_per_atom"]),
                )
            )
    return entries
