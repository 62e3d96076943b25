import sys

import numpy as np
import pytest

from xtalsmith.calculator import (
    EvaluationError,
    PairPotentialCalculator,
    SubprocessCalculator,
)
from xtalsmith.core import CrystalStructure, Lattice, cart_to_frac, pairwise_min_distance

from conftest import make_rocksalt


def na_sigma(calc):
    from xtalsmith.elements import get_element

    return calc.radius_scale * 2 * get_element("Na").covalent_radius


def dimer(distance, a=30.0):
    return CrystalStructure.build(
        ["Na", "Na"], [[0, 0, 0], [distance / a, 0, 0]], Lattice.cubic(a)
    )


def test_dimer_force_vanishes_at_analytic_minimum(calculator):
    rmin = 2 ** (1 / 6) * na_sigma(calculator)
    energy, forces, _ = calculator.evaluate(dimer(rmin))
    assert np.max(np.abs(forces)) < 1e-6
    # well depth is -epsilon plus the cutoff shift
    sigma = na_sigma(calculator)
    src6 = (sigma / calculator.cutoff) ** 6
    shift = 4 * calculator.epsilon * (src6 * src6 - src6)
    assert energy == pytest.approx(-calculator.epsilon - shift, abs=1e-12)


def test_isolated_atom_zero_energy(calculator):
    s = CrystalStructure.build(["Na"], [[0, 0, 0]], Lattice.cubic(2.5 * calculator.cutoff))
    energy, forces, stress = calculator.evaluate(s)
    assert energy == 0.0
    assert np.all(forces == 0.0)
    assert np.all(stress == 0.0)


def cutoff_safe(structure, calc, margin=0.002):
    """No image pair within ``margin`` of the cutoff.

    The truncated potential has a force jump at the cutoff; finite
    differences displace atoms by 1e-4 A, so any pair farther than that
    from the shell cannot cross it during the probe.
    """
    from itertools import product

    L = structure.lattice.matrix
    cart = structure.cart_coords
    shifts = np.array(list(product(range(-2, 3), repeat=3))) @ L
    for i in range(len(cart)):
        for j in range(len(cart)):
            if i == j:
                continue  # self-image distances do not move with the atom
            d = np.linalg.norm(cart[j] + shifts - cart[i], axis=1)
            if np.any(np.abs(d - calc.cutoff) < margin):
                return False
    return True


def random_safe_cell(rng, calc, n=4):
    """Random cell with moderate forces: pairs off the steep repulsive wall
    (central differences would otherwise be truncation-limited) and away
    from the cutoff shell."""
    from xtalsmith.core import pairwise_min_distance

    lat = Lattice.cubic(7.0)
    species = ["Na", "Cl", "Na", "Cl"][:n]
    for _ in range(500):
        s = CrystalStructure.build(species, rng.random((n, 3)), lat)
        if pairwise_min_distance(s) > 2.2 and cutoff_safe(s, calc):
            return s
    raise AssertionError("no cutoff-safe random cell found in 500 draws")


def finite_difference_forces(calc, s, h=1e-4):
    cart = s.cart_coords
    out = np.zeros_like(cart)
    for i in range(len(cart)):
        for k in range(3):
            plus = cart.copy()
            plus[i, k] += h
            minus = cart.copy()
            minus[i, k] -= h
            ep = calc.evaluate(
                CrystalStructure.build(s.species, cart_to_frac(plus, s.lattice), s.lattice)
            )[0]
            em = calc.evaluate(
                CrystalStructure.build(s.species, cart_to_frac(minus, s.lattice), s.lattice)
            )[0]
            out[i, k] = -(ep - em) / (2 * h)
    return out


def test_forces_match_finite_differences(calculator):
    rng = np.random.default_rng(42)
    for _ in range(3):
        s = random_safe_cell(rng, calculator)
        _, forces, _ = calculator.evaluate(s)
        fd = finite_difference_forces(calculator, s)
        assert np.max(np.abs(forces - fd)) < 1e-4


def test_net_force_zero(calculator):
    rng = np.random.default_rng(5)
    s = random_safe_cell(rng, calculator)
    _, forces, _ = calculator.evaluate(s)
    assert np.max(np.abs(forces.sum(axis=0))) < 1e-8


def finite_strain_stress(calc, s, h=1e-5):
    V = s.volume
    out = np.zeros((3, 3))
    for a in range(3):
        for b in range(3):
            vals = []
            for sign in (1, -1):
                eps = np.zeros((3, 3))
                eps[a, b] += sign * h / 2
                eps[b, a] += sign * h / 2
                lat = Lattice.from_matrix(s.lattice.matrix @ (np.eye(3) + eps))
                s2 = CrystalStructure.build(s.species, s.frac_array, lat)
                vals.append(calc.evaluate(s2)[0])
            out[a, b] = (vals[0] - vals[1]) / (2 * h) / V
    return out


def test_stress_matches_finite_strain(calculator):
    rng = np.random.default_rng(9)
    s = random_safe_cell(rng, calculator)
    _, _, stress = calculator.evaluate(s)
    fd = finite_strain_stress(calculator, s)
    assert np.max(np.abs(stress - fd)) < 1e-3


def test_translation_invariance(calculator, rocksalt):
    e1, f1, _ = calculator.evaluate(rocksalt)
    shifted = CrystalStructure.build(
        rocksalt.species, rocksalt.frac_array + 0.123, rocksalt.lattice
    )
    e2, f2, _ = calculator.evaluate(shifted)
    assert e2 == pytest.approx(e1, abs=1e-9)
    assert np.allclose(np.sort(np.linalg.norm(f1, axis=1)), np.sort(np.linalg.norm(f2, axis=1)), atol=1e-9)


def test_overlap_raises(calculator):
    with pytest.raises(EvaluationError, match="below"):
        calculator.evaluate(dimer(0.05))


def test_subprocess_calculator_roundtrip(rocksalt, calculator):
    sub = SubprocessCalculator([sys.executable, "-m", "xtalsmith.cli", "calc", "serve"])
    try:
        e_ref, f_ref, s_ref = calculator.evaluate(rocksalt)
        e, f, s = sub.evaluate(rocksalt)
        assert e == pytest.approx(e_ref, abs=1e-10)
        assert np.allclose(f, f_ref, atol=1e-10)
        assert np.allclose(s, s_ref, atol=1e-12)
        # errors cross the protocol as JSON, not as a dead pipe
        with pytest.raises(EvaluationError, match="below"):
            sub.evaluate(dimer(0.05))
        e2, _, _ = sub.evaluate(rocksalt)
        assert e2 == pytest.approx(e_ref, abs=1e-10)
    finally:
        sub.close()
