"""Element reference data: symbols, electronegativity, radii, oxidation states.

The table ships as a versioned JSON file (``data/elements.json``) covering
Z = 1..103. Electronegativity is Pauling; covalent radii are single-bond
values in angstrom; oxidation states are the common states used by the
charge-neutrality check. Both tables can be overridden at runtime via
:func:`load_overrides` for sensitivity studies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources


class UnknownElementError(KeyError):
    """Raised for species symbols not in the element table."""


@dataclass(frozen=True)
class Element:
    symbol: str
    z: int
    electronegativity: float | None
    covalent_radius: float
    oxidation_states: tuple[int, ...]


def _load_table() -> dict[str, Element]:
    with resources.files("xtalsmith.data").joinpath("elements.json").open() as fh:
        doc = json.load(fh)
    table = {}
    for row in doc["elements"]:
        table[row["symbol"]] = Element(
            symbol=row["symbol"],
            z=row["z"],
            electronegativity=row["electronegativity"],
            covalent_radius=row["covalent_radius"],
            oxidation_states=tuple(row["oxidation_states"]),
        )
    return table


_TABLE: dict[str, Element] = _load_table()
TABLE_VERSION = "1.0"


def get_element(symbol: str) -> Element:
    try:
        return _TABLE[symbol]
    except KeyError:
        raise UnknownElementError(f"unknown element symbol {symbol!r}") from None


def is_element(symbol: str) -> bool:
    return symbol in _TABLE


def all_symbols() -> list[str]:
    return sorted(_TABLE, key=lambda s: _TABLE[s].z)


def electronegativity(symbol: str) -> float:
    """Pauling electronegativity, with a large sentinel where undefined.

    The sentinel keeps noble gases sortable in formula ordering; callers
    that need the raw value should use :func:`get_element`.
    """
    en = get_element(symbol).electronegativity
    return en if en is not None else 1000.0


def load_overrides(path: str) -> None:
    """Merge a user-supplied JSON override file into the live table.

    The file uses the same schema as ``data/elements.json`` but may list
    only the elements it overrides. Intended for swapping oxidation-state
    or electronegativity tabulations without editing package data.
    """
    with open(path) as fh:
        doc = json.load(fh)
    for row in doc.get("elements", []):
        sym = row["symbol"]
        base = _TABLE.get(sym)
        _TABLE[sym] = Element(
            symbol=sym,
            z=row.get("z", base.z if base else 0),
            electronegativity=row.get(
                "electronegativity", base.electronegativity if base else None
            ),
            covalent_radius=row.get(
                "covalent_radius", base.covalent_radius if base else 1.5
            ),
            oxidation_states=tuple(
                row.get("oxidation_states", base.oxidation_states if base else ())
            ),
        )
