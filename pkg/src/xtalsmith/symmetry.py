"""Brute-force symmetry-operation detection and lattice-system labels.

Candidate rotations are the integer matrices with entries in {-1, 0, 1}
that preserve the lattice metric tensor; translations are tried from
like-species site differences. No space-group symbols are assigned; the
useful outputs are the operation list, its count, the lattice system, and
a substitution-invariant prototype signature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CrystalStructure,
    Lattice,
    anonymous_formula,
    min_image_sq_displacement,
    niggli_reduce_structure,
    small_unimodular_matrices,
    wrap_frac,
)

DEFAULT_SYMPREC = 0.01  # angstrom
MAX_SITES = 64


class SiteCountGuardError(ValueError):
    """Structure too large for exhaustive symmetry search."""


@dataclass(frozen=True)
class SymmetryOp:
    """Fractional-basis operation: f -> f @ rotation + translation."""

    rotation: tuple[tuple[int, int, int], ...]
    translation: tuple[float, float, float]

    def apply(self, frac: np.ndarray) -> np.ndarray:
        return wrap_frac(
            np.atleast_2d(frac) @ np.array(self.rotation, dtype=float)
            + np.array(self.translation)
        )

    def compose(self, other: "SymmetryOp") -> tuple[np.ndarray, np.ndarray]:
        """(rotation, translation) of applying self then other, mod 1."""
        r1 = np.array(self.rotation)
        r2 = np.array(other.rotation)
        t = wrap_frac(np.array(self.translation) @ r2 + np.array(other.translation))
        return r1 @ r2, t


def _metric_rotations(lattice: Lattice, atol: float) -> np.ndarray:
    cands = small_unimodular_matrices()
    G = lattice.metric_tensor()
    transformed = np.einsum("nij,jk,nlk->nil", cands.astype(float), G, cands.astype(float))
    ok = np.all(np.abs(transformed - G) <= atol, axis=(1, 2))
    return cands[ok]


def lattice_rotation_count(lattice: Lattice, tol: float = 1e-5) -> int:
    """Order of the lattice point group found by the {-1,0,1} search."""
    atol = tol * float(np.max(np.abs(lattice.metric_tensor())))
    return len(_metric_rotations(lattice, max(atol, 1e-12)))


def find_symmetry_ops(
    s: CrystalStructure, symprec: float = DEFAULT_SYMPREC
) -> list[SymmetryOp]:
    """All (rotation, translation) ops mapping the structure onto itself.

    The result contains the identity and is closed under composition modulo
    lattice translations. Translations are wrapped to [0, 1).
    """
    n = s.n_sites
    if n > MAX_SITES:
        raise SiteCountGuardError(f"{n} sites exceeds the guard of {MAX_SITES}")
    lattice = s.lattice
    metric_atol = 2.0 * symprec * max(lattice.lengths) + symprec * symprec
    rotations = _metric_rotations(lattice, metric_atol)

    frac = s.frac_array
    species = s.species
    blocks: dict[str, list[int]] = {}
    for i, sym in enumerate(species):
        blocks.setdefault(sym, []).append(i)
    anchor_sym = min(blocks, key=lambda sym: (len(blocks[sym]), sym))
    anchor = frac[blocks[anchor_sym][0]]

    sq_prec = symprec * symprec
    ops: dict[tuple, SymmetryOp] = {}
    for R in rotations:
        mapped_all = frac @ R
        mapped_anchor = anchor @ R
        for j in blocks[anchor_sym]:
            t = wrap_frac(frac[j] - mapped_anchor)
            used: set[int] = set()
            good = True
            for i in range(n):
                target = wrap_frac(mapped_all[i] + t)
                hit = -1
                for k in blocks[species[i]]:
                    if k in used:
                        continue
                    if min_image_sq_displacement(target, frac[k], lattice) <= sq_prec:
                        hit = k
                        break
                if hit < 0:
                    good = False
                    break
                used.add(hit)
            if good:
                key = (tuple(map(tuple, R)), tuple(np.round(t / symprec).astype(int)))
                ops.setdefault(
                    key,
                    SymmetryOp(
                        rotation=tuple(tuple(int(x) for x in row) for row in R),
                        translation=tuple(float(x) for x in t),
                    ),
                )
    return sorted(
        ops.values(), key=lambda op: (op.rotation, op.translation)
    )


_SYSTEM_BY_ORDER = (
    (48, "cubic"),
    (24, "hexagonal"),
    (16, "tetragonal"),
    (12, "trigonal"),
    (8, "orthorhombic"),
    (4, "monoclinic"),
)


def crystal_system(lattice: Lattice, tol: float = 1e-5) -> str:
    """Lattice-system label from the point-group order of the cell.

    Expects a Niggli-reduced cell (the {-1,0,1} rotation search is complete
    for reduced bases).
    """
    count = lattice_rotation_count(lattice, tol)
    for threshold, name in _SYSTEM_BY_ORDER:
        if count >= threshold:
            return name
    return "triclinic"


def prototype_signature(
    s: CrystalStructure, symprec: float = DEFAULT_SYMPREC
) -> tuple[str, int, tuple[int, ...]]:
    """(anonymous formula, op count, site-orbit multiplicity multiset).

    Computed on the Niggli-reduced cell, so it is stable under lattice
    re-representation but intentionally not under supercell expansion.
    """
    red = niggli_reduce_structure(s)
    ops = find_symmetry_ops(red, symprec)
    n = red.n_sites
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    frac = red.frac_array
    sq_prec = symprec * symprec
    blocks: dict[str, list[int]] = {}
    for i, sym in enumerate(red.species):
        blocks.setdefault(sym, []).append(i)
    for op in ops:
        mapped = op.apply(frac)
        for i in range(n):
            for k in blocks[red.species[i]]:
                if min_image_sq_displacement(mapped[i], frac[k], red.lattice) <= sq_prec:
                    ri, rk = find(i), find(k)
                    if ri != rk:
                        parent[max(ri, rk)] = min(ri, rk)
                    break
    orbit_sizes: dict[int, int] = {}
    for i in range(n):
        root = find(i)
        orbit_sizes[root] = orbit_sizes.get(root, 0) + 1
    return (
        anonymous_formula(red.composition),
        len(ops),
        tuple(sorted(orbit_sizes.values())),
    )
