"""Periodic structure matching, duplicate grouping, and novelty screening.

Two structures match when, after volume normalization, cell reduction, and
the best choice of lattice correspondence + translation + per-species site
assignment, the normalized RMS site displacement stays below the site
tolerance. The displacement is measured in a frame scaled to one cubic
angstrom per atom, which makes the reported rmse dimensionless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import (
    CrystalStructure,
    Lattice,
    make_supercell,
    niggli_reduce_structure,
    reduced_formula,
    small_unimodular_matrices,
    wrap_frac,
)


@dataclass(frozen=True)
class MatchTolerances:
    """ltol: relative length tolerance; stol: normalized site displacement
    tolerance; angle_tol: degrees."""

    ltol: float = 0.2
    stol: float = 0.3
    angle_tol: float = 5.0

    def __post_init__(self):
        if min(self.ltol, self.stol, self.angle_tol) <= 0:
            raise ValueError("tolerances must be strictly positive")


DEFAULT_TOLERANCES = MatchTolerances()


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    rmse: float | None = None


_SHIFTS27 = np.array(list(product((-1.0, 0.0, 1.0), repeat=3)))


def _scale_to_unit_density(s: CrystalStructure) -> CrystalStructure:
    factor = (s.n_sites / s.volume) ** (1.0 / 3.0)
    return CrystalStructure.build(
        s.species, s.frac_array, Lattice.from_matrix(s.lattice.matrix * factor)
    )


def _factor_triples(ratio: int) -> list[tuple[int, int, int]]:
    out = []
    for f1 in range(1, ratio + 1):
        if ratio % f1:
            continue
        rem = ratio // f1
        for f2 in range(1, rem + 1):
            if rem % f2:
                continue
            out.append((f1, f2, rem // f2))
    return out


def _cell_params(matrices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.linalg.norm(matrices, axis=2)
    angles = np.empty_like(lengths)
    for k, (i, j) in enumerate(((1, 2), (0, 2), (0, 1))):
        cosang = np.einsum("nk,nk->n", matrices[:, i], matrices[:, j]) / (
            lengths[:, i] * lengths[:, j]
        )
        angles[:, k] = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return lengths, angles


def _min_image_cart(deltas: np.ndarray, lattice_matrix: np.ndarray) -> np.ndarray:
    """Min-image Cartesian displacement for each fractional delta (..., 3)."""
    d = deltas - np.round(deltas)
    cands = d[..., None, :] + _SHIFTS27  # (..., 27, 3)
    carts = cands @ lattice_matrix
    norms = np.einsum("...ik,...ik->...i", carts, carts)
    idx = np.argmin(norms, axis=-1)
    return np.take_along_axis(carts, idx[..., None, None], axis=-2).squeeze(-2)


def _species_blocks(species: tuple[str, ...]) -> dict[str, list[int]]:
    blocks: dict[str, list[int]] = {}
    for i, sym in enumerate(species):
        blocks.setdefault(sym, []).append(i)
    return blocks


def _best_rms_for_translation(
    frac1: np.ndarray,
    frac2: np.ndarray,
    blocks1: dict[str, list[int]],
    blocks2: dict[str, list[int]],
    lattice_matrix: np.ndarray,
    lattice_inverse: np.ndarray,
    shift: np.ndarray,
) -> float:
    """RMS Cartesian displacement under optimal per-species assignment.

    One refinement pass re-centers the translation on the mean displacement
    before the final assignment.
    """
    n = len(frac1)

    def assignment_disps(extra_shift):
        disps = np.empty((n, 3))
        for sym, idx1 in blocks1.items():
            idx2 = blocks2[sym]
            deltas = (
                frac2[idx2][None, :, :] + shift + extra_shift - frac1[idx1][:, None, :]
            )
            carts = _min_image_cart(deltas, lattice_matrix)
            cost = np.einsum("ijk,ijk->ij", carts, carts)
            rows, cols = linear_sum_assignment(cost)
            disps[idx1] = carts[rows, cols]
        return disps

    disps = assignment_disps(np.zeros(3))
    mean_frac = np.mean(disps, axis=0) @ lattice_inverse
    disps = assignment_disps(-mean_frac)
    return math.sqrt(float(np.mean(np.einsum("ik,ik->i", disps, disps))))


def _compare_reduced(
    s1: CrystalStructure, s2: CrystalStructure, tol: MatchTolerances
) -> float | None:
    """Best normalized RMS displacement between two reduced, density-matched
    structures with the same site count, or None when no lattice
    correspondence fits the tolerances."""
    L1 = s1.lattice.matrix
    lengths1 = np.array(s1.lattice.lengths)
    angles1 = np.array(s1.lattice.angles)

    cands = small_unimodular_matrices()
    mapped = cands @ s2.lattice.matrix
    lengths, angles = _cell_params(mapped)
    ok = np.all(np.abs(lengths - lengths1) <= tol.ltol * lengths1, axis=1) & np.all(
        np.abs(angles - angles1) <= tol.angle_tol, axis=1
    )
    if not np.any(ok):
        return None

    blocks1 = _species_blocks(s1.species)
    blocks2 = _species_blocks(s2.species)
    if {k: len(v) for k, v in blocks1.items()} != {
        k: len(v) for k, v in blocks2.items()
    }:
        return None
    anchor_sym = min(blocks1, key=lambda sym: (len(blocks1[sym]), sym))
    anchor1 = s1.frac_array[blocks1[anchor_sym][0]]

    # displacements are measured in the frame of s1; the correspondence
    # guarantees the two lattices agree within ltol, so the metric choice
    # shifts rms only at order ltol * rms
    L1_inv = np.linalg.inv(L1)
    best = None
    for U in cands[ok]:
        frac2 = wrap_frac(s2.frac_array @ np.linalg.inv(U))
        for j in blocks2[anchor_sym]:
            shift = anchor1 - frac2[j]
            rms = _best_rms_for_translation(
                s1.frac_array, frac2, blocks1, blocks2, L1, L1_inv, shift
            )
            if best is None or rms < best:
                best = rms
                if best < 1e-12:
                    return best
    return best


def match(
    s1: CrystalStructure,
    s2: CrystalStructure,
    tol: MatchTolerances = DEFAULT_TOLERANCES,
    attempt_supercell: bool = True,
) -> MatchResult:
    """Decide structural equivalence and report the normalized displacement."""
    if reduced_formula(s1.composition) != reduced_formula(s2.composition):
        return MatchResult(False)

    a, b = _scale_to_unit_density(s1), _scale_to_unit_density(s2)
    if a.n_sites > b.n_sites:
        a, b = b, a
    expansions: list[CrystalStructure]
    if a.n_sites == b.n_sites:
        expansions = [a]
    else:
        if b.n_sites % a.n_sites or not attempt_supercell:
            return MatchResult(False)
        ratio = b.n_sites // a.n_sites
        expansions = [make_supercell(a, f) for f in _factor_triples(ratio)]

    red_b = niggli_reduce_structure(b)
    best = None
    for exp in expansions:
        rms = _compare_reduced(niggli_reduce_structure(exp), red_b, tol)
        if rms is not None and (best is None or rms < best):
            best = rms
            if best < 1e-12:
                break
    if best is None or best > tol.stol:
        return MatchResult(False)
    return MatchResult(True, rmse=best)


def match_rate(
    predictions: list[CrystalStructure],
    ground_truths: list[CrystalStructure],
    tol: MatchTolerances = DEFAULT_TOLERANCES,
) -> tuple[float, float | None]:
    """(fraction matched, mean rmse over matched pairs)."""
    if len(predictions) != len(ground_truths):
        raise ValueError(
            f"aligned lists required: {len(predictions)} predictions vs "
            f"{len(ground_truths)} ground truths"
        )
    if not predictions:
        raise ValueError("empty evaluation lists")
    rmses = []
    for p, g in zip(predictions, ground_truths):
        res = match(p, g, tol)
        if res.matched:
            rmses.append(res.rmse)
    rate = len(rmses) / len(predictions)
    mean_rmse = float(np.mean(rmses)) if rmses else None
    return rate, mean_rmse


def dedup(
    candidates: list[CrystalStructure],
    tol: MatchTolerances = DEFAULT_TOLERANCES,
) -> list[list[int]]:
    """Partition candidate indices into equivalence groups.

    Grouping is the transitive closure of pairwise matches, so the result
    does not depend on input order.
    """
    n = len(candidates)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    buckets: dict[str, list[int]] = {}
    for i, s in enumerate(candidates):
        buckets.setdefault(reduced_formula(s.composition), []).append(i)
    for idxs in buckets.values():
        for pos, i in enumerate(idxs):
            for j in idxs[pos + 1 :]:
                if find(i) != find(j) and match(candidates[i], candidates[j], tol).matched:
                    union(i, j)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [sorted(groups[root]) for root in sorted(groups)]


def novelty(
    candidates: list[CrystalStructure],
    reference: list,
    tol: MatchTolerances = DEFAULT_TOLERANCES,
) -> list[bool]:
    """True per candidate iff it matches no reference structure.

    ``reference`` may hold structures or database records with a
    ``.structure`` attribute; references are pre-filtered by reduced
    formula before matching.
    """
    ref_structs = [getattr(r, "structure", r) for r in reference]
    buckets: dict[str, list[CrystalStructure]] = {}
    for rs in ref_structs:
        buckets.setdefault(reduced_formula(rs.composition), []).append(rs)
    out = []
    for cand in candidates:
        bucket = buckets.get(reduced_formula(cand.composition), [])
        out.append(not any(match(cand, ref, tol).matched for ref in bucket))
    return out
