"""Pluggable property calculators.

Only a deliberately simple bandgap estimator ships built in: a monotone
function of electronegativity spread and packing density, useful for
exercising property-guided workflows end to end. It is a stand-in, not a
physical model; real estimators plug in through the same interface.
"""

from __future__ import annotations

from .core import CrystalStructure
from .elements import get_element


class PropertyCalculator:
    """Interface: compute(structure) -> float (property value)."""

    name: str = "property"

    def compute(self, s: CrystalStructure) -> float:
        raise NotImplementedError


class ToyBandgapModel(PropertyCalculator):
    """Toy estimate in eV: wide gaps for ionic, sparse packings.

    gap = max(0, en_coef * (EN_max - EN_min) - density_coef * atoms/volume).
    """

    name = "bandgap"

    def __init__(self, en_coef: float = 3.2, density_coef: float = 14.0):
        self.en_coef = en_coef
        self.density_coef = density_coef

    def compute(self, s: CrystalStructure) -> float:
        ens = []
        for sym in set(s.species):
            en = get_element(sym).electronegativity
            ens.append(en if en is not None else 0.0)
        spread = max(ens) - min(ens) if len(ens) > 1 else 0.0
        density = s.n_sites / s.volume
        return max(0.0, self.en_coef * spread - self.density_coef * density)
