"""Regenerates the committed fixture files in this directory.

Run from the repository root: ``python3 tests/fixtures/make_fixtures.py``.
The golden files (CIF bytes, generation report) are frozen outputs of this
script; regenerate only when a deliberate contract change requires it.
"""

import json
from pathlib import Path

import numpy as np

from xtalsmith.core import CrystalStructure, Lattice, pairwise_min_distance
from xtalsmith.cif import write_cif
from xtalsmith.database import StructureRecord, write_database

HERE = Path(__file__).parent

FC_ROCKSALT = [
    [0, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5], [0, 0.5, 0.5],
    [0.5, 0, 0], [0, 0.5, 0], [0, 0, 0.5], [0.5, 0.5, 0.5],
]
FC_ZINCBLENDE = [
    [0, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5], [0, 0.5, 0.5],
    [0.25, 0.25, 0.25], [0.75, 0.75, 0.25], [0.75, 0.25, 0.75], [0.25, 0.75, 0.75],
]
FC_ANTIFLUORITE = [
    [0, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5], [0, 0.5, 0.5],
    [0.25, 0.25, 0.25], [0.75, 0.25, 0.25], [0.25, 0.75, 0.25], [0.25, 0.25, 0.75],
    [0.75, 0.75, 0.25], [0.75, 0.25, 0.75], [0.25, 0.75, 0.75], [0.75, 0.75, 0.75],
]


def rocksalt(a, cation="Na", anion="Cl"):
    return CrystalStructure.build([cation] * 4 + [anion] * 4, FC_ROCKSALT, Lattice.cubic(a))


def random_packed(species, a, seed, min_dist=1.9):
    rng = np.random.default_rng(seed)
    lat = Lattice.cubic(a)
    while True:
        s = CrystalStructure.build(species, rng.random((len(species), 3)), lat)
        if pairwise_min_distance(s) > min_dist:
            return s


def csp_session_fixtures():
    """Database + scripted responses for the five-step CSP session."""
    srcof = random_packed(["Sr"] * 2 + ["Co"] * 2 + ["F"] * 9, 7.2, seed=1)
    na3alf6 = random_packed(["Na"] * 3 + ["Al"] + ["F"] * 6, 6.5, seed=2)
    nacl = rocksalt(5.64)
    kbr = rocksalt(6.6, "K", "Br")
    baf2 = CrystalStructure.build(
        ["Ba"] * 4 + ["F"] * 8,
        FC_ANTIFLUORITE[:4] + FC_ANTIFLUORITE[4:],
        Lattice.cubic(6.2),
    )
    write_database(
        [
            StructureRecord("proto-srcof", srcof, {"source": "fixture"}),
            StructureRecord("proto-na3alf6", na3alf6, {}),
            StructureRecord("nacl-rocksalt", nacl, {}),
            StructureRecord("kbr-rocksalt", kbr, {}),
            StructureRecord("baf2-fluorite", baf2, {}),
        ],
        HERE / "csp_db.jsonl",
    )

    workflow = (
        "Step 1: Query the structural database for crystal structures with "
        "compositions or reduced formulas similar to Ba2Fe2F9 to identify "
        "promising prototypes.\n"
        "Step 2: Generate initial candidate structures for Ba2Fe2F9 by "
        "element substitution into the retrieved prototypes.\n"
        "Step 3: Relax the candidate structures with the configured force "
        "field, optimizing both lattice and atomic positions.\n"
        "Step 4: Compute total energies for the relaxed candidates and "
        "select the lowest-energy structure as the most probable stable "
        "configuration.\n"
        "Step 5: Validate the selected structure, cross-reference it "
        "against the database, and save it as the final artifact.\n"
        "\n"
        "Please review and provide feedback or suggest revisions to the "
        "workflow."
    )

    def plan(fn, calls):
        return json.dumps({"function name": fn, "plan": calls, "comment": ""})

    script = [
        {"expect_substring": "Workflow Planner", "response_text": workflow},
        {
            "expect_substring": "'step1'",
            "response_text": plan(
                "step1",
                [
                    {
                        "tool": "query_database",
                        "args": {"db_path": "$db_path", "composition": "$composition", "k": 5},
                        "bind_output": "prototype_records",
                    }
                ],
            ),
        },
        {
            "expect_substring": "'step2'",
            "response_text": plan(
                "step2",
                [
                    {
                        "tool": "generate_candidates",
                        "args": {
                            "composition": "$composition",
                            "records": "$prototype_records.records",
                            "m": 3,
                        },
                        "bind_output": "candidates",
                    }
                ],
            ),
        },
        {
            "expect_substring": "'step3'",
            "response_text": plan(
                "step3",
                [
                    {
                        "tool": "relax_structures",
                        "args": {"structures": "$candidates.structures"},
                        "bind_output": "relaxed",
                    }
                ],
            ),
        },
        {
            "expect_substring": "'step4'",
            "response_text": plan(
                "step4",
                [
                    {
                        "tool": "select_lowest_energy",
                        "args": {
                            "structures": "$relaxed.structures",
                            "energies_per_atom": "$relaxed.energies_per_atom",
                        },
                        "bind_output": "best",
                    }
                ],
            ),
        },
        {
            "expect_substring": "'step5'",
            "response_text": plan(
                "step5",
                [
                    {
                        "tool": "check_validity",
                        "args": {"structure": "$best.structure"},
                        "bind_output": "validity",
                    },
                    {
                        "tool": "compare_with_database",
                        "args": {"structure": "$best.structure", "db_path": "$db_path"},
                        "bind_output": "novelty_check",
                    },
                    {
                        "tool": "save_structure",
                        "args": {"structure": "$best.structure", "filename": "final_structure.cif"},
                        "bind_output": "artifact",
                    },
                ],
            ),
        },
    ]
    (HERE / "csp_script.json").write_text(json.dumps(script, indent=1) + "\n")


def generation_metric_fixtures():
    """Ten candidates plus hull and reference files for the metrics golden."""
    candidates = [
        rocksalt(5.8),
        rocksalt(5.5),
        CrystalStructure.build(["Na", "Cl"], [[0, 0, 0], [0.5, 0.5, 0.5]], Lattice.cubic(3.6)),
        CrystalStructure.build(["Na"] * 4 + ["Cl"] * 4, FC_ZINCBLENDE, Lattice.cubic(6.4)),
        CrystalStructure.build(["Na", "Na"], [[0, 0, 0], [0.5, 0.5, 0.5]], Lattice.cubic(4.29)),
        CrystalStructure.build(["Na", "Na"], [[0, 0, 0], [0.05 / 8.0, 0, 0]], Lattice.cubic(8.0)),
        CrystalStructure.build(["Cl"] * 4 + ["Na"] * 8, FC_ANTIFLUORITE, Lattice.cubic(6.8)),
        rocksalt(5.7),
        CrystalStructure.build(
            ["Cl"] * 4, [[0, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5], [0, 0.5, 0.5]], Lattice.cubic(4.4)
        ),
        rocksalt(5.9),
    ]
    with open(HERE / "gen_candidates.jsonl", "w") as fh:
        for s in candidates:
            fh.write(json.dumps(s.as_dict()) + "\n")

    write_database(
        [
            StructureRecord(
                "ref-nacl-cscl",
                CrystalStructure.build(
                    ["Na", "Cl"], [[0, 0, 0], [0.5, 0.5, 0.5]], Lattice.cubic(3.58)
                ),
                {"note": "known polymorph"},
            ),
            StructureRecord("ref-mgo-rocksalt", rocksalt(4.21, "Mg", "O"), {}),
            StructureRecord("ref-kbr-rocksalt", rocksalt(6.6, "K", "Br"), {}),
        ],
        HERE / "gen_reference.jsonl",
    )

    hull_lines = [
        {"composition": "Na", "energy_per_atom": -1.2781},
        {"composition": "Cl", "energy_per_atom": -0.8},
        {"composition": "NaCl", "energy_per_atom": -1.08},
    ]
    with open(HERE / "gen_hull.jsonl", "w") as fh:
        for line in hull_lines:
            fh.write(json.dumps(line) + "\n")


def golden_cif():
    (HERE / "golden_nacl.cif").write_bytes(write_cif(rocksalt(5.64), name="nacl").encode())


def audit_fixtures():
    """Planner-audit scripts: an executable set and a non-executable set."""
    tasks = [
        {
            "task": "Please predict the stable structure for Ba2Fe2F9.",
            "intuition": "Similar compositions share prototypes; a structure database is available at fixtures/csp_db.jsonl.",
            "task_kind": "csp",
            "parameters": {"composition": "Ba2Fe2F9", "db_path": "tests/fixtures/csp_db.jsonl"},
        },
        {
            "task": "Generate 10 stable and novel crystal structures.",
            "intuition": "Sample prototypes from the database and relax them with the force field.",
            "task_kind": "csg",
            "parameters": {"db_path": "tests/fixtures/csp_db.jsonl", "n": 10},
        },
        {
            "task": "Generate crystal structures with bandgap > 3 eV.",
            "intuition": "Estimate bandgaps with the property model and keep structures that satisfy the constraint.",
            "task_kind": "property",
            "parameters": {"db_path": "tests/fixtures/csp_db.jsonl", "constraint": "bandgap>3"},
        },
    ]
    (HERE / "audit_tasks.json").write_text(json.dumps(tasks, indent=1) + "\n")

    def plan(fn, calls):
        return json.dumps({"function name": fn, "plan": calls, "comment": ""})

    good = []
    # csp task: 5 steps, each validating against the catalog
    good.append(
        {
            "expect_substring": "Workflow Planner",
            "response_text": (
                "Step 1: Query the structural database for prototypes similar to the target composition.\n"
                "Step 2: Generate candidate structures by element substitution.\n"
                "Step 3: Relax the candidates with the force field.\n"
                "Step 4: Select the lowest-energy relaxed candidate.\n"
                "Step 5: Validate the selection and save it.\n"
                "Please review and approve."
            ),
        }
    )
    good += [
        {"expect_substring": "'step1'", "response_text": plan("step1", [
            {"tool": "query_database", "args": {"db_path": "$db_path", "composition": "$composition"}, "bind_output": "hits"}])},
        {"expect_substring": "'step2'", "response_text": plan("step2", [
            {"tool": "generate_candidates", "args": {"composition": "$composition", "records": "$hits.records"}, "bind_output": "cands"}])},
        {"expect_substring": "'step3'", "response_text": plan("step3", [
            {"tool": "relax_structures", "args": {"structures": "$cands.structures"}, "bind_output": "relaxed"}])},
        {"expect_substring": "'step4'", "response_text": plan("step4", [
            {"tool": "select_lowest_energy", "args": {"structures": "$relaxed.structures", "energies_per_atom": "$relaxed.energies_per_atom"}, "bind_output": "best"}])},
        {"expect_substring": "'step5'", "response_text": plan("step5", [
            {"tool": "check_validity", "args": {"structure": "$best.structure"}, "bind_output": "validity"},
            {"tool": "save_structure", "args": {"structure": "$best.structure", "filename": "best.cif"}, "bind_output": "saved"}])},
    ]
    # csg task: 4 steps
    good.append(
        {
            "expect_substring": "Workflow Planner",
            "response_text": (
                "Step 1: Sample diverse prototype structures from the database.\n"
                "Step 2: Relax the sampled structures with the force field.\n"
                "Step 3: Check validity of the relaxed structures.\n"
                "Step 4: Save the best structure.\n"
                "Please review and approve."
            ),
        }
    )
    good += [
        {"expect_substring": "'step1'", "response_text": plan("step1", [
            {"tool": "sample_database", "args": {"db_path": "$db_path", "n": "$n"}, "bind_output": "sampled"}])},
        {"expect_substring": "'step2'", "response_text": plan("step2", [
            {"tool": "generate_candidates", "args": {"composition": "NaCl", "records": "$sampled.records"}, "bind_output": "gen"},
            {"tool": "relax_structures", "args": {"structures": "$gen.structures"}, "bind_output": "relaxed"}])},
        {"expect_substring": "'step3'", "response_text": plan("step3", [
            {"tool": "select_lowest_energy", "args": {"structures": "$relaxed.structures", "energies_per_atom": "$relaxed.energies_per_atom"}, "bind_output": "best"},
            {"tool": "check_validity", "args": {"structure": "$best.structure"}, "bind_output": "validity"}])},
        {"expect_substring": "'step4'", "response_text": plan("step4", [
            {"tool": "save_structure", "args": {"structure": "$best.structure", "filename": "sampled.cif"}, "bind_output": "saved"}])},
    ]
    # property task: 3 steps
    good.append(
        {
            "expect_substring": "Workflow Planner",
            "response_text": (
                "Step 1: Sample candidate structures from the database and relax them.\n"
                "Step 2: Estimate bandgaps for the relaxed structures.\n"
                "Step 3: Filter structures satisfying the constraint and save the best one.\n"
                "Please review and approve."
            ),
        }
    )
    good += [
        {"expect_substring": "'step1'", "response_text": plan("step1", [
            {"tool": "sample_database", "args": {"db_path": "$db_path", "n": 5}, "bind_output": "sampled"},
            {"tool": "generate_candidates", "args": {"composition": "NaCl", "records": "$sampled.records"}, "bind_output": "gen"},
            {"tool": "relax_structures", "args": {"structures": "$gen.structures"}, "bind_output": "relaxed"}])},
        {"expect_substring": "'step2'", "response_text": plan("step2", [
            {"tool": "estimate_bandgaps", "args": {"structures": "$relaxed.structures"}, "bind_output": "gaps"}])},
        {"expect_substring": "'step3'", "response_text": plan("step3", [
            {"tool": "filter_by_value", "args": {"structures": "$relaxed.structures", "values": "$gaps.bandgaps", "op": ">", "threshold": 3}, "bind_output": "kept"},
            {"tool": "save_structure", "args": {"structure": "$kept.structures", "filename": "filtered.cif"}, "bind_output": "saved"}])},
    ]
    (HERE / "audit_with_intuition.json").write_text(json.dumps(good, indent=1) + "\n")

    bad = []
    for _ in range(3):
        bad.append(
            {
                "expect_substring": "Workflow Planner",
                "response_text": (
                    "Step 1: Set up the computational environment and install packages.\n"
                    "Step 2: Load the machine learning model into memory.\n"
                    "Please review and approve."
                ),
            }
        )
        bad.append(
            {
                "expect_substring": "'step1'",
                "response_text": plan("step1", [
                    {"tool": "setup_environment", "args": {}, "bind_output": "env"}]),
            }
        )
    (HERE / "audit_without_intuition.json").write_text(json.dumps(bad, indent=1) + "\n")


if __name__ == "__main__":
    csp_session_fixtures()
    generation_metric_fixtures()
    golden_cif()
    audit_fixtures()
    print("fixtures written to", HERE)
