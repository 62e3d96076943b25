"""Crystal value types and periodic-geometry primitives.

A crystal is (species, fractional coordinates, lattice). Coordinates are
stored fractionally and wrapped to [0, 1); Cartesian positions are a view
computed through the lattice matrix, whose rows are the three basis
vectors in angstrom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import product

import numpy as np

from .elements import electronegativity, get_element

#: Iteration cap for the cell-reduction loop.
NIGGLI_MAX_STEPS = 100

_EPS_DET = 1e-12


class DegenerateLatticeError(ValueError):
    """Lattice matrix is singular or numerically unusable."""


class ReductionFailureError(RuntimeError):
    """Cell reduction did not terminate within the step cap."""


def wrap_frac(coords) -> np.ndarray:
    """Wrap fractional coordinates into [0, 1).

    Values that land on 1.0 after the modulo (e.g. -1e-17) are folded back
    to 0.0 so the half-open interval invariant holds exactly.
    """
    wrapped = np.asarray(coords, dtype=float) % 1.0
    wrapped[wrapped >= 1.0] = 0.0
    return wrapped


@dataclass(frozen=True)
class Lattice:
    """Periodic cell; ``rows[i]`` is basis vector i in angstrom."""

    rows: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        m = np.asarray(self.rows, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"lattice must be 3x3, got {m.shape}")
        if abs(np.linalg.det(m)) < _EPS_DET:
            raise DegenerateLatticeError("lattice matrix is singular")
        object.__setattr__(self, "rows", tuple(tuple(float(x) for x in r) for r in m))

    @classmethod
    def from_matrix(cls, matrix) -> "Lattice":
        return cls(tuple(tuple(float(x) for x in row) for row in np.asarray(matrix)))

    @classmethod
    def cubic(cls, a: float) -> "Lattice":
        return cls.from_matrix(np.diag([a, a, a]))

    @classmethod
    def from_parameters(
        cls, a: float, b: float, c: float, alpha: float, beta: float, gamma: float
    ) -> "Lattice":
        """Build with the conventional orientation: a along x, b in the xy plane.

        Angles in degrees; alpha is the angle between b and c, etc.
        """
        al, be, ga = (math.radians(x) for x in (alpha, beta, gamma))
        cos_al, cos_be, cos_ga = math.cos(al), math.cos(be), math.cos(ga)
        sin_ga = math.sin(ga)
        if abs(sin_ga) < 1e-12:
            raise DegenerateLatticeError("gamma of 0 or 180 degrees")
        cx = c * cos_be
        cy = c * (cos_al - cos_be * cos_ga) / sin_ga
        cz_sq = c * c - cx * cx - cy * cy
        if cz_sq <= 0:
            raise DegenerateLatticeError("cell angles do not define a 3D cell")
        return cls.from_matrix(
            [
                [a, 0.0, 0.0],
                [b * cos_ga, b * sin_ga, 0.0],
                [cx, cy, math.sqrt(cz_sq)],
            ]
        )

    @cached_property
    def matrix(self) -> np.ndarray:
        m = np.array(self.rows, dtype=float)
        m.flags.writeable = False
        return m

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = np.linalg.inv(self.matrix)
        inv.flags.writeable = False
        return inv

    @property
    def volume(self) -> float:
        r = self.matrix
        return abs(float(np.dot(r[0], np.cross(r[1], r[2]))))

    @property
    def lengths(self) -> tuple[float, float, float]:
        return tuple(float(x) for x in np.linalg.norm(self.matrix, axis=1))

    @property
    def angles(self) -> tuple[float, float, float]:
        """(alpha, beta, gamma) in degrees."""
        m = self.matrix
        lens = np.linalg.norm(m, axis=1)
        out = []
        for i, j in ((1, 2), (0, 2), (0, 1)):
            cosang = np.dot(m[i], m[j]) / (lens[i] * lens[j])
            out.append(math.degrees(math.acos(np.clip(cosang, -1.0, 1.0))))
        return tuple(out)

    @property
    def parameters(self) -> tuple[float, float, float, float, float, float]:
        return self.lengths + self.angles

    def metric_tensor(self) -> np.ndarray:
        return self.matrix @ self.matrix.T


@dataclass(frozen=True)
class Composition:
    """Element counts of one cell; all counts are positive integers."""

    counts: tuple[tuple[str, int], ...]

    def __post_init__(self):
        items = dict(self.counts)
        if not items:
            raise ValueError("composition must contain at least one element")
        for sym, n in items.items():
            get_element(sym)
            if n < 1 or n != int(n):
                raise ValueError(f"count for {sym} must be a positive integer")
        object.__setattr__(
            self, "counts", tuple(sorted((s, int(n)) for s, n in items.items()))
        )

    @classmethod
    def from_dict(cls, counts: dict[str, int]) -> "Composition":
        return cls(tuple(counts.items()))

    @classmethod
    def from_formula(cls, formula: str) -> "Composition":
        """Parse a plain formula like ``Ba2Fe2F9`` (no parentheses)."""
        import re

        counts: dict[str, int] = {}
        pos = 0
        for m in re.finditer(r"([A-Z][a-z]?)(\d*)", formula):
            if m.start() != pos or not m.group(0):
                break
            counts[m.group(1)] = counts.get(m.group(1), 0) + int(m.group(2) or 1)
            pos = m.end()
        if pos != len(formula) or not counts:
            raise ValueError(f"cannot parse formula {formula!r}")
        return cls.from_dict(counts)

    def as_dict(self) -> dict[str, int]:
        return dict(self.counts)

    @property
    def elements(self) -> tuple[str, ...]:
        return tuple(s for s, _ in self.counts)

    @property
    def n_atoms(self) -> int:
        return sum(n for _, n in self.counts)

    def reduced(self) -> "Composition":
        g = math.gcd(*(n for _, n in self.counts))
        return Composition(tuple((s, n // g) for s, n in self.counts))

    def fractional(self) -> dict[str, float]:
        total = self.n_atoms
        return {s: n / total for s, n in self.counts}


@dataclass(frozen=True)
class CrystalStructure:
    """Periodic structure: per-site species symbols + fractional coordinates."""

    species: tuple[str, ...]
    frac_coords: tuple[tuple[float, float, float], ...]
    lattice: Lattice

    def __post_init__(self):
        coords = wrap_frac(np.asarray(self.frac_coords, dtype=float).reshape(-1, 3))
        if len(self.species) != len(coords) or len(self.species) == 0:
            raise ValueError("species and coordinates must align and be non-empty")
        for sym in self.species:
            get_element(sym)
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(
            self, "frac_coords", tuple(tuple(float(x) for x in r) for r in coords)
        )

    @classmethod
    def build(cls, species, frac_coords, lattice) -> "CrystalStructure":
        if not isinstance(lattice, Lattice):
            lattice = Lattice.from_matrix(lattice)
        return cls(tuple(species), tuple(map(tuple, np.atleast_2d(frac_coords))), lattice)

    @property
    def n_sites(self) -> int:
        return len(self.species)

    @cached_property
    def frac_array(self) -> np.ndarray:
        arr = np.array(self.frac_coords, dtype=float)
        arr.flags.writeable = False
        return arr

    @property
    def cart_coords(self) -> np.ndarray:
        return frac_to_cart(self.frac_array, self.lattice)

    @property
    def composition(self) -> Composition:
        counts: dict[str, int] = {}
        for s in self.species:
            counts[s] = counts.get(s, 0) + 1
        return Composition.from_dict(counts)

    @property
    def volume(self) -> float:
        return self.lattice.volume

    def density_atoms_per_ang3(self) -> float:
        return self.n_sites / self.volume

    def as_dict(self) -> dict:
        return {
            "species": list(self.species),
            "frac_coords": [list(r) for r in self.frac_coords],
            "lattice": [list(r) for r in self.lattice.rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CrystalStructure":
        return cls.build(d["species"], d["frac_coords"], d["lattice"])


# ---------------------------------------------------------------------------
# coordinate transforms


def frac_to_cart(coords, lattice: Lattice) -> np.ndarray:
    """Fractional -> Cartesian (angstrom): ``cart = frac @ L``."""
    return np.atleast_2d(np.asarray(coords, dtype=float)) @ lattice.matrix


def cart_to_frac(coords, lattice: Lattice) -> np.ndarray:
    """Cartesian -> fractional, unwrapped."""
    return np.atleast_2d(np.asarray(coords, dtype=float)) @ lattice.inverse


def min_image_distance(a, b, lattice: Lattice) -> float:
    """Shortest distance between fractional points over the 27 nearest images.

    Exact for reduced (compact) cells; callers with heavily skewed cells
    should Niggli-reduce first.
    """
    return math.sqrt(min_image_sq_displacement(a, b, lattice))


_IMAGE_SHIFTS = np.array(list(product((-1.0, 0.0, 1.0), repeat=3)))


def min_image_sq_displacement(a, b, lattice: Lattice) -> float:
    d = wrap_frac(np.asarray(b, dtype=float) - np.asarray(a, dtype=float))
    carts = (d + _IMAGE_SHIFTS) @ lattice.matrix
    return float(np.min(np.einsum("ij,ij->i", carts, carts)))


def min_image_frac_delta(a, b, lattice: Lattice) -> np.ndarray:
    """Fractional displacement b - a brought to its minimum-image form."""
    d = wrap_frac(np.asarray(b, dtype=float) - np.asarray(a, dtype=float))
    cands = d + _IMAGE_SHIFTS
    carts = cands @ lattice.matrix
    return cands[int(np.argmin(np.einsum("ij,ij->i", carts, carts)))]


def pairwise_min_distance(s: CrystalStructure) -> float:
    """Minimum over all site pairs and periodic self-images.

    For a single-site cell this is the shortest lattice translation.
    """
    red = niggli_reduce_structure(s)
    lat, frac = red.lattice, red.frac_array
    # self-image distances equal lattice translation lengths for every site
    shifts = _IMAGE_SHIFTS[np.any(_IMAGE_SHIFTS != 0.0, axis=1)]
    trans = shifts @ lat.matrix
    best = float(np.min(np.linalg.norm(trans, axis=1)))
    n = len(frac)
    for i in range(n):
        for j in range(i + 1, n):
            best = min(best, min_image_distance(frac[i], frac[j], lat))
    return best


# ---------------------------------------------------------------------------
# supercells


def make_supercell(s: CrystalStructure, factors) -> CrystalStructure:
    """Replicate the cell by integer factors along each basis vector."""
    f = [int(x) for x in factors]
    if any(x < 1 for x in f):
        raise ValueError(f"supercell factors must be >= 1, got {factors}")
    new_rows = np.array(s.lattice.matrix) * np.array(f)[:, None]
    species: list[str] = []
    coords: list[np.ndarray] = []
    for shift in product(range(f[0]), range(f[1]), range(f[2])):
        for sym, fr in zip(s.species, s.frac_array):
            species.append(sym)
            coords.append((fr + np.array(shift, dtype=float)) / np.array(f))
    return CrystalStructure.build(species, np.array(coords), Lattice.from_matrix(new_rows))


# ---------------------------------------------------------------------------
# cell reduction

# Unimodular updates used by the reduction loop; all have determinant +1.
_M_SWAP_AB = np.array([[0, -1, 0], [-1, 0, 0], [0, 0, -1]])
_M_SWAP_BC = np.array([[-1, 0, 0], [0, 0, -1], [0, -1, 0]])


def _niggli_eps(lattice_matrix: np.ndarray) -> float:
    vol = abs(np.linalg.det(lattice_matrix))
    return 1e-5 * vol ** (2.0 / 3.0)


def niggli_transform(lattice: Lattice) -> tuple[Lattice, np.ndarray]:
    """Reduce to the Niggli cell; returns (reduced lattice, integer M).

    ``M @ L == L_reduced`` with ``|det M| == 1``, so both matrices span the
    same point lattice. Raises :class:`ReductionFailureError` if the loop
    exceeds the step cap.
    """
    L = np.array(lattice.matrix, dtype=float)
    eps = _niggli_eps(L)
    M_total = np.eye(3, dtype=int)

    def params(L):
        g = L @ L.T
        return (
            g[0, 0],
            g[1, 1],
            g[2, 2],
            2.0 * g[1, 2],
            2.0 * g[0, 2],
            2.0 * g[0, 1],
        )

    def apply(M):
        nonlocal L, M_total
        L = M @ L
        M_total = M @ M_total

    for _ in range(NIGGLI_MAX_STEPS):
        A, B, C, xi, eta, zeta = params(L)

        # step 1: order a, b
        if A > B + eps or (abs(A - B) <= eps and abs(xi) > abs(eta) + eps):
            apply(_M_SWAP_AB)
            A, B, C, xi, eta, zeta = params(L)
        # step 2: order b, c
        if B > C + eps or (abs(B - C) <= eps and abs(eta) > abs(zeta) + eps):
            apply(_M_SWAP_BC)
            continue
        # steps 3/4: fix the signs of the off-diagonal terms
        lmn = [
            1 if v > eps else (-1 if v < -eps else 0) for v in (xi, eta, zeta)
        ]
        if lmn[0] * lmn[1] * lmn[2] == 1:
            i = -1 if lmn[0] == -1 else 1
            j = -1 if lmn[1] == -1 else 1
            k = -1 if lmn[2] == -1 else 1
            apply(np.diag([i, j, k]))
        else:
            signs = [1, 1, 1]
            free = -1
            for idx, v in enumerate(lmn):
                if v == 1:
                    signs[idx] = -1
                elif v == 0:
                    free = idx
            if signs[0] * signs[1] * signs[2] == -1:
                if free >= 0:
                    signs[free] = -1
                else:
                    # all three negative or mixed without a free slot: flip the
                    # axis paired with the largest magnitude to keep det +1
                    signs[int(np.argmax(np.abs([xi, eta, zeta])))] *= -1
            apply(np.diag(signs))
        A, B, C, xi, eta, zeta = params(L)

        # step 5
        if abs(xi) > B + eps or (abs(xi - B) <= eps and 2 * eta < zeta - eps) or (
            abs(xi + B) <= eps and zeta < -eps
        ):
            sign = 1 if xi > 0 else -1
            apply(np.array([[1, 0, 0], [0, 1, 0], [0, -sign, 1]]))
            continue
        # step 6
        if abs(eta) > A + eps or (abs(eta - A) <= eps and 2 * xi < zeta - eps) or (
            abs(eta + A) <= eps and zeta < -eps
        ):
            sign = 1 if eta > 0 else -1
            apply(np.array([[1, 0, 0], [0, 1, 0], [-sign, 0, 1]]))
            continue
        # step 7
        if abs(zeta) > A + eps or (abs(zeta - A) <= eps and 2 * xi < eta - eps) or (
            abs(zeta + A) <= eps and eta < -eps
        ):
            sign = 1 if zeta > 0 else -1
            apply(np.array([[1, 0, 0], [-sign, 1, 0], [0, 0, 1]]))
            continue
        # step 8
        if xi + eta + zeta + A + B < -eps or (
            abs(xi + eta + zeta + A + B) <= eps and 2 * (A + eta) + zeta > eps
        ):
            apply(np.array([[1, 0, 0], [0, 1, 0], [1, 1, 1]]))
            continue
        return Lattice.from_matrix(L), M_total

    raise ReductionFailureError(
        f"cell reduction did not converge in {NIGGLI_MAX_STEPS} steps"
    )


def niggli_reduce(lattice: Lattice) -> Lattice:
    """Niggli-reduced representation of the same lattice."""
    reduced, _ = niggli_transform(lattice)
    return reduced


def niggli_reduce_structure(s: CrystalStructure) -> CrystalStructure:
    """Re-express the structure in its Niggli-reduced cell."""
    reduced, M = niggli_transform(s.lattice)
    new_frac = s.frac_array @ np.linalg.inv(M)
    return CrystalStructure.build(s.species, new_frac, reduced)


# ---------------------------------------------------------------------------
# formulas


def _formula_order(counts: dict[str, int]) -> list[str]:
    return sorted(counts, key=lambda s: (electronegativity(s), s))


def reduced_formula(c: Composition) -> str:
    """Reduced formula, elements ordered by electronegativity then symbol."""
    red = c.reduced().as_dict()
    parts = []
    for sym in _formula_order(red):
        n = red[sym]
        parts.append(sym if n == 1 else f"{sym}{n}")
    return "".join(parts)


def anonymous_formula(c: Composition) -> str:
    """Stoichiometry-only formula: letters A, B, ... by descending count.

    Ties keep the reduced-formula element order, so e.g. any rock-salt
    stoichiometry maps to "AB".
    """
    red = c.reduced().as_dict()
    order = _formula_order(red)
    ranked = sorted(order, key=lambda s: (-red[s], order.index(s)))
    parts = []
    for letter, sym in zip("ABCDEFGHIJKLMNOPQRSTUVWXYZ", ranked):
        n = red[sym]
        parts.append(letter if n == 1 else f"{letter}{n}")
    return "".join(parts)


def stoichiometry_multiset(c: Composition) -> tuple[int, ...]:
    """Sorted reduced counts; equal multisets mean substitutable prototypes."""
    red = c.reduced().as_dict()
    return tuple(sorted(red.values()))


_UNIMODULAR_CACHE: np.ndarray | None = None


def small_unimodular_matrices() -> np.ndarray:
    """All 3x3 integer matrices with entries in {-1, 0, 1} and det = +-1.

    Shared by lattice-correspondence search and symmetry detection; for
    reduced cells these cover every relevant basis change.
    """
    global _UNIMODULAR_CACHE
    if _UNIMODULAR_CACHE is None:
        entries = np.array(list(product((-1, 0, 1), repeat=9)), dtype=np.int64)
        mats = entries.reshape(-1, 3, 3)
        dets = (
            mats[:, 0, 0] * (mats[:, 1, 1] * mats[:, 2, 2] - mats[:, 1, 2] * mats[:, 2, 1])
            - mats[:, 0, 1] * (mats[:, 1, 0] * mats[:, 2, 2] - mats[:, 1, 2] * mats[:, 2, 0])
            + mats[:, 0, 2] * (mats[:, 1, 0] * mats[:, 2, 1] - mats[:, 1, 1] * mats[:, 2, 0])
        )
        keep = np.abs(dets) == 1
        cache = mats[keep]
        cache.flags.writeable = False
        _UNIMODULAR_CACHE = cache
    return _UNIMODULAR_CACHE
