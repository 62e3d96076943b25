"""xtalsmith: a desk-scale crystal-structure workbench.

Core value types and geometry live in :mod:`xtalsmith.core`; energy and
stability in :mod:`xtalsmith.calculator`, :mod:`xtalsmith.relax`, and
:mod:`xtalsmith.hull`; matching and metrics in :mod:`xtalsmith.matcher`
and :mod:`xtalsmith.metrics`; the mediated agent pipeline under
:mod:`xtalsmith.agents`.
"""

__version__ = "0.1.0"

from .core import Composition, CrystalStructure, Lattice

__all__ = ["Composition", "CrystalStructure", "Lattice", "__version__"]
