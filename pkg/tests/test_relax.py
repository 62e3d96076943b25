import numpy as np
import pytest

from xtalsmith.calculator import PairPotentialCalculator
from xtalsmith.core import CrystalStructure, Lattice, pairwise_min_distance
from xtalsmith.relax import RelaxationError, relax

from conftest import make_rocksalt


def na_rmin(calc):
    from xtalsmith.elements import get_element

    return 2 ** (1 / 6) * calc.radius_scale * 2 * get_element("Na").covalent_radius


def test_already_minimal_structure_is_fixed_point(calculator):
    rmin = na_rmin(calculator)
    s = CrystalStructure.build(
        ["Na", "Na"], [[0, 0, 0], [rmin / 30.0, 0, 0]], Lattice.cubic(30.0)
    )
    res = relax(calculator, s, fmax=1e-4, relax_cell=False)
    assert res.converged
    assert res.n_steps == 0
    assert np.allclose(res.structure.frac_array, s.frac_array)


def test_dimer_relaxes_to_analytic_minimum(calculator):
    s = CrystalStructure.build(
        ["Na", "Na"], [[0, 0, 0], [0.1, 0, 0]], Lattice.cubic(30.0)
    )
    res = relax(calculator, s, max_steps=400, fmax=1e-4, relax_cell=False)
    assert res.converged
    d = pairwise_min_distance(res.structure)
    assert d == pytest.approx(na_rmin(calculator), abs=1e-3)


def test_energy_monotone_across_accepted_steps(calculator, rocksalt):
    perturbed = CrystalStructure.build(
        rocksalt.species,
        rocksalt.frac_array + np.random.default_rng(0).normal(0, 0.02, (8, 3)),
        rocksalt.lattice,
    )
    res = relax(calculator, perturbed, max_steps=80)
    energies = [f.energy for f in res.trajectory]
    assert all(e2 <= e1 + 1e-10 for e1, e2 in zip(energies, energies[1:]))
    assert res.energy <= energies[0]


def test_step_cap_honored(calculator, rocksalt):
    rng = np.random.default_rng(3)
    mangled = CrystalStructure.build(
        rocksalt.species,
        rocksalt.frac_array + rng.normal(0, 0.06, (8, 3)),
        Lattice.from_matrix(rocksalt.lattice.matrix * 1.25),
    )
    res = relax(calculator, mangled, max_steps=100, fmax=1e-9)
    assert res.n_steps == 100
    assert not res.converged
    assert len(res.trajectory) <= 101


def test_cell_relaxation_reduces_stress(calculator):
    strained = CrystalStructure.build(
        make_rocksalt().species,
        make_rocksalt().frac_array,
        Lattice.cubic(6.4),
    )
    res = relax(calculator, strained, max_steps=200, fmax=0.01, relax_cell=True)
    _, _, stress = calculator.evaluate(res.structure)
    assert res.structure.volume < strained.volume  # cell shrank toward the minimum
    assert np.max(np.abs(stress)) < np.max(
        np.abs(calculator.evaluate(strained)[2])
    )


def test_positions_only_mode_keeps_cell(calculator, rocksalt):
    rng = np.random.default_rng(1)
    perturbed = CrystalStructure.build(
        rocksalt.species,
        rocksalt.frac_array + rng.normal(0, 0.02, (8, 3)),
        rocksalt.lattice,
    )
    res = relax(calculator, perturbed, max_steps=50, relax_cell=False)
    assert np.allclose(res.structure.lattice.matrix, rocksalt.lattice.matrix)


def test_evaluation_error_carries_partial_trajectory(calculator):
    s = CrystalStructure.build(
        ["Na", "Na"], [[0, 0, 0], [0.05 / 8.0, 0, 0]], Lattice.cubic(8.0)
    )
    with pytest.raises(RelaxationError) as err:
        relax(calculator, s)
    assert err.value.trajectory == []


def test_relaxed_energy_never_above_initial(calculator):
    rng = np.random.default_rng(11)
    for trial in range(3):
        base = make_rocksalt(5.3 + 0.4 * trial)
        perturbed = CrystalStructure.build(
            base.species,
            base.frac_array + rng.normal(0, 0.03, (8, 3)),
            base.lattice,
        )
        e0 = calculator.evaluate(perturbed)[0]
        res = relax(calculator, perturbed, max_steps=60)
        assert res.energy <= e0 + 1e-10
