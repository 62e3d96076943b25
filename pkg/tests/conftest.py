import json
from pathlib import Path

import numpy as np
import pytest

from xtalsmith.agents.backend import ScriptedBackend
from xtalsmith.agents.planner import TaskKind, TaskSpec
from xtalsmith.calculator import PairPotentialCalculator
from xtalsmith.core import CrystalStructure, Lattice

FIXTURES = Path(__file__).parent / "fixtures"

ROCKSALT_FRAC = [
    [0, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5], [0, 0.5, 0.5],
    [0.5, 0, 0], [0, 0.5, 0], [0, 0, 0.5], [0.5, 0.5, 0.5],
]


def make_rocksalt(a=5.64, cation="Na", anion="Cl"):
    return CrystalStructure.build(
        [cation] * 4 + [anion] * 4, ROCKSALT_FRAC, Lattice.cubic(a)
    )


@pytest.fixture
def rocksalt():
    return make_rocksalt()


@pytest.fixture
def calculator():
    return PairPotentialCalculator()


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def csp_backend():
    return ScriptedBackend.from_file(FIXTURES / "csp_script.json")


@pytest.fixture
def csp_task():
    db = str(FIXTURES / "csp_db.jsonl")
    return TaskSpec(
        task="Please predict the stable structure for Ba2Fe2F9.",
        intuition=(
            "1. Machine-learned force fields are a practical stand-in for "
            "first-principles energies when optimizing structures. "
            "2. Similar chemical compositions often share stable prototypes; "
            f"a structure database is available at {db}."
        ),
        task_kind=TaskKind.CSP,
        parameters={"composition": "Ba2Fe2F9", "db_path": db},
    )


@pytest.fixture
def fixed_clock():
    counter = [1000.0]

    def clock():
        counter[0] += 1.0
        return counter[0]

    return clock


def random_lattice(rng, skew=0.3):
    """Well-conditioned random lattice for property tests."""
    while True:
        base = np.diag(rng.uniform(3.0, 7.0, size=3))
        base += rng.uniform(-skew, skew, size=(3, 3)) * base.max()
        if abs(np.linalg.det(base)) > 8.0:
            return Lattice.from_matrix(base)


def random_structure(rng, species_pool=("Na", "Cl", "K"), n_min=2, n_max=6, min_dist=1.6):
    from xtalsmith.core import pairwise_min_distance

    n = int(rng.integers(n_min, n_max + 1))
    species = [species_pool[int(rng.integers(0, len(species_pool)))] for _ in range(n)]
    while True:
        lat = random_lattice(rng)
        if lat.volume / n < 12.0:
            continue
        s = CrystalStructure.build(species, rng.random((n, 3)), lat)
        if pairwise_min_distance(s) > min_dist:
            return s


def plan_json(fn, calls, comment=""):
    return json.dumps({"function name": fn, "plan": calls, "comment": comment})
