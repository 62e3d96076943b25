"""Registry of executable tools available to generated plans.

Each tool declares its parameters so plans can be validated before any
execution. Tool functions receive a :class:`ToolContext` carrying the
calculator, matching tolerances, and the session workspace for artifacts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from ..calculator import Calculator, PairPotentialCalculator
from ..cif import write_cif
from ..core import Composition, CrystalStructure, reduced_formula
from ..database import StructureRecord, load_database
from ..hull import HullEntry, build_hull, classify_stability, energy_above_hull, load_hull_entries
from ..matcher import DEFAULT_TOLERANCES, MatchTolerances, match
from ..properties import PropertyCalculator, ToyBandgapModel
from ..relax import RelaxationError, relax
from ..retrieval import build_index, generate_candidates, query_similar, substitute
from ..symmetry import crystal_system, find_symmetry_ops, prototype_signature
from ..validity import compositional_validity, structural_validity


class ToolError(RuntimeError):
    """A tool rejected its inputs or failed while executing."""


@dataclass(frozen=True)
class ToolParam:
    name: str
    description: str = ""
    required: bool = True


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    params: tuple[ToolParam, ...]
    fn: object

    def signature(self) -> str:
        rendered = [
            p.name if p.required else f"{p.name}?" for p in self.params
        ]
        return f"{self.name}({', '.join(rendered)})"


@dataclass
class ToolContext:
    workspace: Path | None = None
    calculator: Calculator = field(default_factory=PairPotentialCalculator)
    tolerances: MatchTolerances = DEFAULT_TOLERANCES
    property_model: PropertyCalculator = field(default_factory=ToyBandgapModel)
    relax_max_steps: int = 100
    relax_fmax: float = 0.05


class Toolbox:
    def __init__(self, specs: list[ToolSpec]):
        self._specs = {spec.name: spec for spec in specs}

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def __len__(self) -> int:
        return len(self._specs)

    def get(self, name: str) -> ToolSpec:
        if name not in self._specs:
            raise KeyError(name)
        return self._specs[name]

    def names(self) -> list[str]:
        return sorted(self._specs)

    def catalog_text(self) -> str:
        lines = []
        for name in self.names():
            spec = self._specs[name]
            lines.append(f"- {spec.signature()}: {spec.description}")
        return "\n".join(lines)


def _as_composition(value) -> Composition:
    if isinstance(value, Composition):
        return value
    if isinstance(value, str):
        return Composition.from_formula(value)
    if isinstance(value, dict):
        return Composition.from_dict({k: int(v) for k, v in value.items()})
    raise ToolError(f"cannot interpret {value!r} as a composition")


def _as_structures(value) -> list[CrystalStructure]:
    if isinstance(value, CrystalStructure):
        return [value]
    if isinstance(value, list) and all(isinstance(x, CrystalStructure) for x in value):
        return list(value)
    raise ToolError("expected a structure or list of structures")


def _as_records(value) -> list[StructureRecord]:
    if isinstance(value, list) and all(isinstance(x, StructureRecord) for x in value):
        return list(value)
    raise ToolError("expected a list of database records")


# --- tool implementations ---------------------------------------------------


def _tool_query_database(ctx: ToolContext, db_path, composition, k=5):
    records = load_database(db_path)
    index = build_index(records)
    hits = query_similar(_as_composition(composition), index, int(k))
    return {"records": hits, "count": len(hits)}


def _tool_generate_candidates(ctx: ToolContext, composition, records=None, db_path=None, m=3):
    if records is None:
        if db_path is None:
            raise ToolError("provide records or db_path")
        records = load_database(db_path)
    index = build_index(_as_records(records))
    structures = generate_candidates(
        _as_composition(composition), index, int(m), ctx.tolerances
    )
    return {"structures": structures, "count": len(structures)}


def _tool_substitute_prototype(ctx: ToolContext, record, composition):
    if not isinstance(record, StructureRecord):
        raise ToolError("record must be a database record")
    return {"structure": substitute(record, _as_composition(composition))}


def _tool_relax_structures(ctx: ToolContext, structures, max_steps=None, fmax=None, relax_cell=True):
    structs = _as_structures(structures)
    out_structs, energies, converged, notes = [], [], [], []
    for s in structs:
        try:
            res = relax(
                ctx.calculator,
                s,
                max_steps=int(max_steps) if max_steps is not None else ctx.relax_max_steps,
                fmax=float(fmax) if fmax is not None else ctx.relax_fmax,
                relax_cell=bool(relax_cell),
            )
            out_structs.append(res.structure)
            energies.append(res.energy_per_atom)
            converged.append(res.converged)
            notes.append("")
        except RelaxationError as exc:
            out_structs.append(s)
            energies.append(None)
            converged.append(False)
            notes.append(str(exc))
    return {
        "structures": out_structs,
        "energies_per_atom": energies,
        "converged": converged,
        "notes": notes,
    }


def _tool_evaluate_energies(ctx: ToolContext, structures):
    structs = _as_structures(structures)
    energies = []
    for s in structs:
        energy, _, _ = ctx.calculator.evaluate(s)
        energies.append(energy / s.n_sites)
    return {"energies_per_atom": energies}


def _tool_select_lowest_energy(ctx: ToolContext, structures, energies_per_atom):
    structs = _as_structures(structures)
    if len(structs) != len(energies_per_atom):
        raise ToolError("structures and energies are not aligned")
    scored = [
        (e, i) for i, e in enumerate(energies_per_atom) if e is not None
    ]
    if not scored:
        raise ToolError("no finite energies to rank")
    best_e, best_i = min(scored)
    return {
        "structure": structs[best_i],
        "energy_per_atom": best_e,
        "index": best_i,
    }


def _tool_check_validity(ctx: ToolContext, structure):
    structs = _as_structures(structure)
    s = structs[0]
    ok, dmin, vol = structural_validity(s)
    comp_ok = compositional_validity(s.composition)
    return {
        "structural_ok": ok,
        "compositional_ok": comp_ok,
        "min_distance": dmin,
        "volume": vol,
        "formula": reduced_formula(s.composition),
    }


def _tool_analyze_symmetry(ctx: ToolContext, structure):
    s = _as_structures(structure)[0]
    sig = prototype_signature(s)
    ops = find_symmetry_ops(s)
    from ..core import niggli_reduce

    return {
        "op_count": len(ops),
        "crystal_system": crystal_system(niggli_reduce(s.lattice)),
        "signature": list(sig[:2]) + [list(sig[2])],
    }


def _tool_compare_with_database(ctx: ToolContext, structure, db_path=None, records=None):
    s = _as_structures(structure)[0]
    if records is None:
        if db_path is None:
            raise ToolError("provide records or db_path")
        records = load_database(db_path)
    records = _as_records(records)
    matched_id = None
    for rec in records:
        if match(s, rec.structure, ctx.tolerances).matched:
            matched_id = rec.id
            break
    return {"matched_id": matched_id, "novel": matched_id is None}


def _tool_compute_stability(ctx: ToolContext, structures, energies_per_atom, hull_path):
    structs = _as_structures(structures)
    hull = build_hull(load_hull_entries(hull_path))
    e_hulls, stables = [], []
    for s, e in zip(structs, energies_per_atom):
        if e is None:
            e_hulls.append(None)
            stables.append(False)
            continue
        entry = HullEntry(s.composition, float(e))
        eh = energy_above_hull(entry, hull)
        e_hulls.append(eh)
        stables.append(classify_stability(eh, s.composition).stable)
    return {"e_hull": e_hulls, "stable": stables}


def _tool_estimate_bandgaps(ctx: ToolContext, structures):
    structs = _as_structures(structures)
    return {"bandgaps": [ctx.property_model.compute(s) for s in structs]}


def _tool_filter_by_value(ctx: ToolContext, structures, values, op, threshold):
    structs = _as_structures(structures)
    if len(structs) != len(values):
        raise ToolError("structures and values are not aligned")
    if op not in (">", "<", ">=", "<="):
        raise ToolError(f"unsupported comparison {op!r}")
    thr = float(threshold)
    import operator

    cmp = {">": operator.gt, "<": operator.lt, ">=": operator.ge, "<=": operator.le}[op]
    kept = [(s, v) for s, v in zip(structs, values) if v is not None and cmp(v, thr)]
    return {
        "structures": [s for s, _ in kept],
        "values": [v for _, v in kept],
        "count": len(kept),
    }


def _tool_sample_database(ctx: ToolContext, db_path, n, seed=0):
    records = load_database(db_path)
    if not records:
        return {"records": []}
    import random

    rng = random.Random(int(seed))
    n = min(int(n), len(records))
    picked = rng.sample(records, n)
    return {"records": sorted(picked, key=lambda r: r.id)}


_SAFE_FILENAME = re.compile(r"^[A-Za-z0-9._-]+$")


def _tool_save_structure(ctx: ToolContext, structure, filename):
    s = _as_structures(structure)[0]
    if not _SAFE_FILENAME.match(str(filename)):
        raise ToolError(f"unsafe filename {filename!r}")
    if ctx.workspace is None:
        raise ToolError("no workspace directory configured")
    artifacts = Path(ctx.workspace) / "artifacts"
    artifacts.mkdir(parents=True, exist_ok=True)
    path = artifacts / str(filename)
    path.write_text(write_cif(s, name=Path(str(filename)).stem))
    # workspace-relative so results stay portable and replay-stable
    return {
        "path": str(path.relative_to(ctx.workspace)),
        "formula": reduced_formula(s.composition),
    }


def default_toolbox() -> Toolbox:
    P = ToolParam
    return Toolbox(
        [
            ToolSpec(
                "query_database",
                "Search a structure database for entries with compositions similar to the target; returns ranked records.",
                (P("db_path"), P("composition"), P("k", required=False)),
                _tool_query_database,
            ),
            ToolSpec(
                "generate_candidates",
                "Build candidate structures for a composition by element substitution into retrieved prototypes.",
                (
                    P("composition"),
                    P("records", required=False),
                    P("db_path", required=False),
                    P("m", required=False),
                ),
                _tool_generate_candidates,
            ),
            ToolSpec(
                "substitute_prototype",
                "Relabel one prototype record onto a target composition.",
                (P("record"), P("composition")),
                _tool_substitute_prototype,
            ),
            ToolSpec(
                "relax_structures",
                "Relax structures (positions and cell) with the configured calculator; returns relaxed structures and energies per atom.",
                (
                    P("structures"),
                    P("max_steps", required=False),
                    P("fmax", required=False),
                    P("relax_cell", required=False),
                ),
                _tool_relax_structures,
            ),
            ToolSpec(
                "evaluate_energies",
                "Single-point energies per atom for structures.",
                (P("structures"),),
                _tool_evaluate_energies,
            ),
            ToolSpec(
                "select_lowest_energy",
                "Pick the structure with the lowest energy per atom.",
                (P("structures"), P("energies_per_atom")),
                _tool_select_lowest_energy,
            ),
            ToolSpec(
                "check_validity",
                "Structural and compositional validity of a structure.",
                (P("structure"),),
                _tool_check_validity,
            ),
            ToolSpec(
                "analyze_symmetry",
                "Symmetry operation count, lattice system, and prototype signature.",
                (P("structure"),),
                _tool_analyze_symmetry,
            ),
            ToolSpec(
                "compare_with_database",
                "Match a structure against database records; reports the matching id or novelty.",
                (P("structure"), P("db_path", required=False), P("records", required=False)),
                _tool_compare_with_database,
            ),
            ToolSpec(
                "compute_stability",
                "Energy above the reference hull and stability flags for structures.",
                (P("structures"), P("energies_per_atom"), P("hull_path")),
                _tool_compute_stability,
            ),
            ToolSpec(
                "estimate_bandgaps",
                "Estimate bandgaps with the configured property model.",
                (P("structures"),),
                _tool_estimate_bandgaps,
            ),
            ToolSpec(
                "filter_by_value",
                "Keep structures whose paired value satisfies a comparison against a threshold.",
                (P("structures"), P("values"), P("op"), P("threshold")),
                _tool_filter_by_value,
            ),
            ToolSpec(
                "sample_database",
                "Deterministically sample n records from a database.",
                (P("db_path"), P("n"), P("seed", required=False)),
                _tool_sample_database,
            ),
            ToolSpec(
                "save_structure",
                "Write a structure to the session artifacts directory as CIF.",
                (P("structure"), P("filename")),
                _tool_save_structure,
            ),
        ]
    )
