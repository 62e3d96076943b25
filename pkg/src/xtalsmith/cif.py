"""Minimal CIF dialect: one P1 data block, cell parameters + fractional sites.

Structures are exchanged as symmetry-free (P 1) blocks; no symmetry-operation
expansion is attempted. Numbers with uncertainty suffixes like ``3.35(2)``
are rejected unless ``lenient=True`` strips them.
"""

from __future__ import annotations

import re

from .core import CrystalStructure, Lattice
from .elements import is_element

_CELL_KEYS = (
    "_cell_length_a",
    "_cell_length_b",
    "_cell_length_c",
    "_cell_angle_alpha",
    "_cell_angle_beta",
    "_cell_angle_gamma",
)

_UNCERTAINTY_RE = re.compile(r"^([-+0-9.eE]+)\(\d+\)$")


class CifParseError(ValueError):
    """CIF rejected; carries the 1-based line number of the offending token."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _parse_number(token: str, line: int, lenient: bool) -> float:
    m = _UNCERTAINTY_RE.match(token)
    if m:
        if not lenient:
            raise CifParseError(
                f"number {token!r} carries an uncertainty suffix (use lenient mode)",
                line,
            )
        token = m.group(1)
    try:
        return float(token)
    except ValueError:
        raise CifParseError(f"malformed number {token!r}", line) from None


def _element_from_label(label: str, line: int) -> str:
    sym = re.match(r"([A-Za-z]{1,2})", label)
    candidate = sym.group(1).capitalize() if sym else label
    if is_element(candidate):
        return candidate
    if len(candidate) == 2 and is_element(candidate[0]):
        return candidate[0]
    raise CifParseError(f"unknown element symbol in {label!r}", line)


def parse_cif(text: str, lenient: bool = False) -> CrystalStructure:
    """Parse one data block into a structure.

    Reads the six cell parameters and the atom-site loop
    (``_atom_site_type_symbol`` or ``_atom_site_label`` plus
    ``_atom_site_fract_{x,y,z}``). Coordinates are wrapped to [0, 1).
    """
    lines = text.splitlines()
    cell: dict[str, float] = {}
    species: list[str] = []
    coords: list[list[float]] = []

    data_blocks = [i for i, ln in enumerate(lines) if ln.strip().lower().startswith("data_")]
    if len(data_blocks) > 1:
        raise CifParseError("multiple data blocks; expected exactly one", data_blocks[1] + 1)

    i = 0
    while i < len(lines):
        raw = lines[i]
        line_no = i + 1
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            i += 1
            continue
        toks = stripped.split()
        key = toks[0]
        if key in _CELL_KEYS:
            if len(toks) < 2:
                raise CifParseError(f"{key} has no value", line_no)
            cell[key] = _parse_number(toks[1], line_no, lenient)
            i += 1
            continue
        if key.lower() == "loop_":
            headers: list[str] = []
            i += 1
            while i < len(lines) and lines[i].strip().startswith("_"):
                headers.append(lines[i].strip().split()[0])
                i += 1
            if not any(h.startswith("_atom_site") for h in headers):
                # some other loop; skip its body
                while i < len(lines):
                    s = lines[i].strip()
                    if not s or s.startswith(("_", "loop_", "data_", "#")):
                        break
                    i += 1
                continue
            col = {h: idx for idx, h in enumerate(headers)}
            sym_col = col.get("_atom_site_type_symbol", col.get("_atom_site_label"))
            try:
                fx = col["_atom_site_fract_x"]
                fy = col["_atom_site_fract_y"]
                fz = col["_atom_site_fract_z"]
            except KeyError as exc:
                raise CifParseError(f"atom loop missing column {exc}", line_no) from None
            if sym_col is None:
                raise CifParseError(
                    "atom loop has neither _atom_site_type_symbol nor _atom_site_label",
                    line_no,
                )
            while i < len(lines):
                s = lines[i].strip()
                row_no = i + 1
                if not s or s.startswith(("_", "loop_", "data_", "#")):
                    break
                fields = s.split()
                if len(fields) < len(headers):
                    raise CifParseError(
                        f"atom row has {len(fields)} fields, loop declares {len(headers)}",
                        row_no,
                    )
                species.append(_element_from_label(fields[sym_col], row_no))
                coords.append(
                    [
                        _parse_number(fields[fx], row_no, lenient),
                        _parse_number(fields[fy], row_no, lenient),
                        _parse_number(fields[fz], row_no, lenient),
                    ]
                )
                i += 1
            continue
        i += 1

    for key in _CELL_KEYS:
        if key not in cell:
            raise CifParseError(f"missing cell parameter {key}", len(lines))
    if not species:
        raise CifParseError("no atom sites found", len(lines))

    lattice = Lattice.from_parameters(
        cell["_cell_length_a"],
        cell["_cell_length_b"],
        cell["_cell_length_c"],
        cell["_cell_angle_alpha"],
        cell["_cell_angle_beta"],
        cell["_cell_angle_gamma"],
    )
    return CrystalStructure.build(species, coords, lattice)


def write_cif(s: CrystalStructure, name: str = "xtalsmith") -> str:
    """Serialize to the same dialect parse_cif reads (P 1, 6-decimal fields)."""
    a, b, c, alpha, beta, gamma = s.lattice.parameters
    out = [
        f"data_{name}",
        f"_cell_length_a {a:.6f}",
        f"_cell_length_b {b:.6f}",
        f"_cell_length_c {c:.6f}",
        f"_cell_angle_alpha {alpha:.6f}",
        f"_cell_angle_beta {beta:.6f}",
        f"_cell_angle_gamma {gamma:.6f}",
        "_symmetry_space_group_name_H-M 'P 1'",
        "loop_",
        " _atom_site_type_symbol",
        " _atom_site_label",
        " _atom_site_fract_x",
        " _atom_site_fract_y",
        " _atom_site_fract_z",
    ]
    tally: dict[str, int] = {}
    for sym, (x, y, z) in zip(s.species, s.frac_coords):
        tally[sym] = tally.get(sym, 0) + 1
        out.append(f" {sym} {sym}{tally[sym]} {x:.6f} {y:.6f} {z:.6f}")
    return "\n".join(out) + "\n"
