"""Batch evaluation pipelines: generation quality, prediction accuracy, and
workflow-planning validity.

Generation metrics follow the standard screening ladder: relax each
candidate, check structural/compositional validity, score stability
against a reference hull, then compute uniqueness among the stable set
and novelty against the reference database. All rates use the candidate
count as denominator except uniqueness, whose denominator is the stable
count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .calculator import Calculator
from .core import CrystalStructure, reduced_formula
from .database import StructureRecord
from .hull import (
    HullEntry,
    MissingElementalReferenceError,
    build_hull,
    classify_stability,
    energy_above_hull,
)
from .matcher import DEFAULT_TOLERANCES, MatchTolerances, dedup, match_rate, novelty
from .relax import RelaxationError, relax
from .validity import compositional_validity, structural_validity
from .agents.backend import BackendError, LanguageBackend
from .agents.executor import StepContext, StepResult, generate_tool_plan
from .agents.planner import (
    StepCountError,
    TaskSpec,
    WorkflowParseError,
    plan_workflow,
)
from .agents.toolbox import Toolbox, default_toolbox
from .agents.toolplan import ToolPlanError


@dataclass(frozen=True)
class GenerationReport:
    n_candidates: int
    structural_validity_rate: float
    compositional_validity_rate: float
    metastability_rate_0_1: float
    metastability_rate_0_03: float
    stability_rate: float
    uniqueness_rate: float
    novelty_rate: float
    sun_rate: float

    def as_dict(self) -> dict:
        return {
            "n_candidates": self.n_candidates,
            "structural_validity_rate": self.structural_validity_rate,
            "compositional_validity_rate": self.compositional_validity_rate,
            "metastability_rate_0_1": self.metastability_rate_0_1,
            "metastability_rate_0_03": self.metastability_rate_0_03,
            "stability_rate": self.stability_rate,
            "uniqueness_rate": self.uniqueness_rate,
            "novelty_rate": self.novelty_rate,
            "sun_rate": self.sun_rate,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


@dataclass
class CandidateRow:
    index: int
    formula: str
    relaxed: bool
    energy_per_atom: float | None
    e_hull: float | None
    structural_ok: bool
    compositional_ok: bool
    stable: bool
    metastable_0_1: bool
    metastable_0_03: bool
    unique: bool
    novel: bool
    sun: bool
    error: str = ""


@dataclass(frozen=True)
class CspReport:
    n_pairs: int
    match_rate: float
    mean_rmse: float | None

    def as_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "match_rate": self.match_rate,
            "mean_rmse": self.mean_rmse,
        }


def evaluate_generation_detailed(
    candidates: list[CrystalStructure],
    reference_db: list[StructureRecord],
    hull_entries: list[HullEntry],
    calculator: Calculator,
    tol: MatchTolerances = DEFAULT_TOLERANCES,
    relax_max_steps: int = 100,
    relax_fmax: float = 0.05,
    workers: int = 1,
) -> tuple[GenerationReport, list[CandidateRow]]:
    """Full generation evaluation; returns the report plus per-candidate rows."""
    if not candidates:
        raise ValueError("no candidates to evaluate")
    hull = build_hull(hull_entries)
    missing = sorted(
        {el for c in candidates for el in c.composition.elements}
        - set(hull.elements)
    )
    if missing:
        raise MissingElementalReferenceError(
            f"hull lacks references for candidate elements: {', '.join(missing)}"
        )

    def relax_one(idx_s):
        idx, s = idx_s
        try:
            res = relax(
                calculator, s, max_steps=relax_max_steps, fmax=relax_fmax
            )
            return idx, res.structure, res.energy_per_atom, ""
        except RelaxationError as exc:
            return idx, s, None, str(exc)

    if workers > 1 and getattr(calculator, "thread_safe", False):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            relaxed = list(pool.map(relax_one, enumerate(candidates)))
    else:
        relaxed = [relax_one(x) for x in enumerate(candidates)]
    relaxed.sort(key=lambda r: r[0])

    rows: list[CandidateRow] = []
    for idx, struct, e_per_atom, err in relaxed:
        if e_per_atom is None:
            ok, dmin, vol = structural_validity(struct)
            comp_ok = compositional_validity(struct.composition)
            rows.append(
                CandidateRow(
                    index=idx,
                    formula=reduced_formula(struct.composition),
                    relaxed=False,
                    energy_per_atom=None,
                    e_hull=None,
                    structural_ok=ok,
                    compositional_ok=comp_ok,
                    stable=False,
                    metastable_0_1=False,
                    metastable_0_03=False,
                    unique=False,
                    novel=False,
                    sun=False,
                    error=err,
                )
            )
            continue
        ok, dmin, vol = structural_validity(struct)
        comp_ok = compositional_validity(struct.composition)
        eh = energy_above_hull(HullEntry(struct.composition, e_per_atom), hull)
        flags = classify_stability(eh, struct.composition)
        rows.append(
            CandidateRow(
                index=idx,
                formula=reduced_formula(struct.composition),
                relaxed=True,
                energy_per_atom=e_per_atom,
                e_hull=eh,
                structural_ok=ok,
                compositional_ok=comp_ok,
                stable=flags.stable,
                metastable_0_1=flags.metastable_0_1,
                metastable_0_03=flags.metastable_0_03,
                unique=False,
                novel=False,
                sun=False,
                error="",
            )
        )

    structures = [s for _, s, _, _ in relaxed]

    # uniqueness among the stable set: one representative per match group
    stable_idx = [r.index for r in rows if r.stable]
    groups = dedup([structures[i] for i in stable_idx], tol) if stable_idx else []
    for group in groups:
        rep = stable_idx[group[0]]
        rows[rep] = replace(rows[rep], unique=True)

    novel_flags = novelty(structures, reference_db, tol)
    for i, is_novel in enumerate(novel_flags):
        rows[i] = replace(rows[i], novel=bool(is_novel))
    for i, r in enumerate(rows):
        rows[i] = replace(r, sun=r.stable and r.unique and r.novel)

    n = len(candidates)
    n_stable = len(stable_idx)

    def rate(count, denom=n):
        return count / denom if denom else 0.0

    report = GenerationReport(
        n_candidates=n,
        structural_validity_rate=rate(sum(r.structural_ok for r in rows)),
        compositional_validity_rate=rate(sum(r.compositional_ok for r in rows)),
        metastability_rate_0_1=rate(sum(r.metastable_0_1 for r in rows)),
        metastability_rate_0_03=rate(sum(r.metastable_0_03 for r in rows)),
        stability_rate=rate(n_stable),
        uniqueness_rate=rate(len(groups), n_stable),
        novelty_rate=rate(sum(r.novel for r in rows)),
        sun_rate=rate(sum(r.sun for r in rows)),
    )
    return report, rows


def evaluate_generation(
    candidates: list[CrystalStructure],
    reference_db: list[StructureRecord],
    hull_entries: list[HullEntry],
    calculator: Calculator,
    tol: MatchTolerances = DEFAULT_TOLERANCES,
    **kwargs,
) -> GenerationReport:
    report, _ = evaluate_generation_detailed(
        candidates, reference_db, hull_entries, calculator, tol, **kwargs
    )
    return report


def evaluate_csp(
    predictions: list[CrystalStructure],
    ground_truths: list[CrystalStructure],
    tol: MatchTolerances = DEFAULT_TOLERANCES,
) -> CspReport:
    rate, mean_rmse = match_rate(predictions, ground_truths, tol)
    return CspReport(n_pairs=len(predictions), match_rate=rate, mean_rmse=mean_rmse)


# ---------------------------------------------------------------------------
# workflow-planning audit


@dataclass
class AuditRow:
    task_kind: str
    task: str
    trials: int
    n_valid: int = 0
    lengths: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def validity_rate(self) -> float:
        return self.n_valid / self.trials if self.trials else 0.0

    @property
    def mean_length(self) -> float | None:
        return sum(self.lengths) / len(self.lengths) if self.lengths else None


@dataclass
class WorkflowAuditReport:
    with_intuition: bool
    rows: list[AuditRow]

    @property
    def overall_validity_rate(self) -> float:
        total = sum(r.trials for r in self.rows)
        return sum(r.n_valid for r in self.rows) / total if total else 0.0

    @property
    def mean_workflow_length(self) -> float | None:
        lengths = [x for r in self.rows for x in r.lengths]
        return sum(lengths) / len(lengths) if lengths else None

    def as_dict(self) -> dict:
        return {
            "with_intuition": self.with_intuition,
            "overall_validity_rate": self.overall_validity_rate,
            "mean_workflow_length": self.mean_workflow_length,
            "rows": [
                {
                    "task_kind": r.task_kind,
                    "task": r.task,
                    "trials": r.trials,
                    "n_valid": r.n_valid,
                    "validity_rate": r.validity_rate,
                    "mean_length": r.mean_length,
                    "failures": r.failures,
                }
                for r in self.rows
            ],
        }


def _dry_run_workflow(
    backend: LanguageBackend, workflow, task: TaskSpec, toolbox: Toolbox
) -> str | None:
    """Validate every step's plan without executing; None when executable."""
    names = set(task.parameters)
    for step in workflow.steps:
        ctx = StepContext(
            step=step,
            previous_result=None
            if step.index == 1
            else StepResult(bindings={}, summary="(dry run; not executed)"),
            step_intuition=task.step_intuitions.get(step.index, task.intuition),
        )
        try:
            plan = generate_tool_plan(backend, ctx, toolbox, names)
        except ToolPlanError as exc:
            return f"step {step.index}: {exc}"
        except BackendError as exc:
            return f"step {step.index}: backend failure: {exc}"
        names |= {c.bind_output for c in plan.calls if c.bind_output}
    return None


def audit_workflows(
    backend: LanguageBackend,
    tasks: list[TaskSpec],
    with_intuition: bool,
    trials: int,
    toolbox: Toolbox | None = None,
) -> WorkflowAuditReport:
    """Sample workflows per task and score executability.

    A sample is valid iff the planner output parses, respects the step
    bound, and every step yields a plan that validates against the tool
    catalog (dry run; nothing is executed). Backend errors count as
    invalid samples. Mean length is taken over parseable samples.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    toolbox = toolbox or default_toolbox()
    rows = []
    for task in tasks:
        probe = task if with_intuition else replace(task, intuition="")
        row = AuditRow(
            task_kind=probe.task_kind.value, task=probe.task, trials=trials
        )
        for _ in range(trials):
            try:
                workflow = plan_workflow(backend, probe, max_parse_attempts=1)
            except (WorkflowParseError, StepCountError, BackendError) as exc:
                row.failures.append(str(exc))
                continue
            row.lengths.append(workflow.T)
            failure = _dry_run_workflow(backend, workflow, probe, toolbox)
            if failure is None:
                row.n_valid += 1
            else:
                row.failures.append(failure)
        rows.append(row)
    return WorkflowAuditReport(with_intuition=with_intuition, rows=rows)
