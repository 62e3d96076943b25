"""Command-line interface: database management, mediated discovery runs,
and evaluation pipelines.

Exit codes: 0 success, 1 domain failure (failed session, invalid inputs),
2 environment failure (unreadable files, unreachable backend).
"""

from __future__ import annotations

import json
import shlex
import sys
from pathlib import Path

import click

from . import __version__
from .agents.backend import BackendError, ScriptedBackend, backend_from_config
from .agents.mediator import AutopilotPolicy, Session, SessionState
from .agents.planner import TaskKind, TaskSpec
from .calculator import PairPotentialCalculator, SubprocessCalculator, serve_stdin
from .cif import CifParseError, parse_cif, write_cif
from .config import RunConfig, apply_overrides, echo_config, load_config
from .core import Composition, CrystalStructure, reduced_formula
from .database import DatabaseError, StructureRecord, load_database, write_database
from .hull import build_hull, load_hull_entries
from .matcher import match
from .metrics import (
    audit_workflows,
    evaluate_csp,
    evaluate_generation_detailed,
)
from .reporting import (
    audit_table,
    csp_table,
    generation_table,
    write_audit_outputs,
    write_csp_outputs,
    write_generation_outputs,
)


class EnvironmentFailure(click.ClickException):
    exit_code = 2


def _fail_domain(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
@click.version_option(__version__)
def main():
    """Crystal-structure workbench: retrieval, relaxation, stability metrics,
    and reviewed LLM-planned discovery sessions."""


# --- db -----------------------------------------------------------------------


@main.group()
def db():
    """Structure database management."""


@db.command("import-cifs")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.option("--skip-bad", is_flag=True, help="Skip unparseable files with a warning.")
@click.option("--lenient", is_flag=True, help="Strip uncertainty suffixes like 3.35(2).")
def db_import_cifs(directory, output, skip_bad, lenient):
    """Convert a directory of CIF files into a JSONL database."""
    records = []
    failures = []
    for path in sorted(Path(directory).glob("*.cif")):
        try:
            structure = parse_cif(path.read_text(), lenient=lenient)
            records.append(StructureRecord(path.stem, structure, {"source": path.name}))
        except (CifParseError, ValueError) as exc:
            failures.append(f"{path.name}: {exc}")
    for failure in failures:
        click.echo(f"parse failure: {failure}", err=True)
    write_database(records, output)
    click.echo(f"wrote {len(records)} records to {output}")
    if failures and not skip_bad:
        _fail_domain(f"{len(failures)} file(s) failed to parse")


@db.command("stats")
@click.argument("db_path", type=click.Path(exists=True, dir_okay=False))
def db_stats(db_path):
    """Record count, element coverage, and formula histogram."""
    try:
        records = load_database(db_path)
    except DatabaseError as exc:
        _fail_domain(str(exc))
    click.echo(f"records: {len(records)}")
    elements = sorted({el for r in records for el in r.structure.composition.elements})
    click.echo(f"elements: {' '.join(elements)}")
    histogram: dict[str, int] = {}
    for r in records:
        f = reduced_formula(r.structure.composition)
        histogram[f] = histogram.get(f, 0) + 1
    click.echo("formula histogram:")
    for f in sorted(histogram):
        click.echo(f"  {f}: {histogram[f]}")


# --- run ------------------------------------------------------------------------


def _make_backend(cfg: RunConfig, fixtures: str | None):
    if fixtures:
        return ScriptedBackend.from_file(fixtures)
    try:
        return backend_from_config(cfg.backend)
    except (KeyError, ValueError) as exc:
        raise EnvironmentFailure(f"bad backend config: {exc}") from exc


def _print_plan(session: Session) -> None:
    wf = session.state.workflow
    click.echo("proposed workflow:")
    for step in wf["steps"]:
        click.echo(f"  Step {step['index']}: {step['description']}")


def _print_step_result(session: Session) -> None:
    t = session.state.current_step
    result = session.state.step_results.get(str(t))
    if result:
        click.echo(f"step {t} result (attempt {result['attempt']}):")
        for line in result["summary"].splitlines():
            click.echo(f"  {line}")


def _drive_interactive(session: Session) -> SessionState:
    while session.status() == SessionState.PLAN_PROPOSED:
        _print_plan(session)
        choice = click.prompt("[a]pprove / [r]evise / [q]uit", default="a")
        if choice.startswith("a"):
            session.review_plan("approve")
        elif choice.startswith("r"):
            feedback = click.prompt("feedback")
            session.review_plan("revise", feedback)
        else:
            return session.status()
    while session.status() == SessionState.PLAN_APPROVED:
        session.run_step()
        if session.status() != SessionState.STEP_REVIEW:
            break
        _print_step_result(session)
        choice = click.prompt("[a]pprove / [f]eedback / [x] abort", default="a")
        if choice.startswith("a"):
            session.review_step("approve")
        elif choice.startswith("f"):
            feedback = click.prompt("feedback")
            session.review_step("feedback", feedback)
        else:
            session.review_step("abort")
    return session.status()


def _run_session(task: TaskSpec, cfg: RunConfig, fixtures, autopilot, out, session_id, fixed_clock):
    cfg.apply_element_overrides()
    backend = _make_backend(cfg, fixtures)
    outdir = Path(out or cfg.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, outdir)
    kwargs = {}
    if fixed_clock is not None:
        counter = [float(fixed_clock)]

        def clock():
            counter[0] += 1.0
            return counter[0]

        kwargs["clock"] = clock
    session = Session(backend, workspace=outdir, session_id=session_id, **kwargs)
    try:
        session.submit_task(task)
    except BackendError as exc:
        raise EnvironmentFailure(f"backend unreachable: {exc}") from exc
    if autopilot:
        state = session.autopilot(AutopilotPolicy.APPROVE_ALL)
    else:
        state = _drive_interactive(session)
    click.echo(f"session {session.id}: {state.value}")
    click.echo(f"workspace: {session.workspace}")
    if state != SessionState.COMPLETED:
        if session.state.failure_reason:
            click.echo(f"failure: {session.state.failure_reason}", err=True)
        sys.exit(1)


def _session_options(fn):
    for deco in (
        click.option("--db", "db_path", type=click.Path(exists=True), required=True),
        click.option("--hull", "hull_path", type=click.Path(exists=True), default=None),
        click.option("--intuition", default=None, help="Expert intuition text."),
        click.option("--autopilot", is_flag=True, help="Auto-approve plan and steps."),
        click.option("--config", "config_path", type=click.Path(exists=True), default=None),
        click.option("--out", type=click.Path(), default=None),
        click.option("--backend-fixtures", type=click.Path(exists=True), default=None,
                     help="Scripted backend fixture file (offline runs)."),
        click.option("--session-id", default=None),
        click.option("--fixed-clock", type=float, default=None,
                     help="Deterministic event timestamps (testing hook)."),
    ):
        fn = deco(fn)
    return fn


DEFAULT_CSP_INTUITION = (
    "1. Machine-learned force fields are a practical stand-in for "
    "first-principles energies when optimizing structures. "
    "2. Similar chemical compositions often share stable structural "
    "prototypes; the structure database at {db} provides prototypes."
)


@main.group()
def run():
    """Run a mediated discovery session."""


@run.command("csp")
@click.option("--composition", required=True)
@_session_options
def run_csp(composition, db_path, hull_path, intuition, autopilot, config_path, out,
            backend_fixtures, session_id, fixed_clock):
    """Predict the stable structure for a composition."""
    cfg = load_config(config_path)
    apply_overrides(cfg, db_path=db_path, hull_path=hull_path)
    try:
        Composition.from_formula(composition)
    except (ValueError, KeyError) as exc:
        _fail_domain(f"bad composition: {exc}")
    params = {"composition": composition, "db_path": db_path}
    if hull_path:
        params["hull_path"] = hull_path
    task = TaskSpec(
        task=f"Please predict the stable structure for {composition}.",
        intuition=intuition
        if intuition is not None
        else DEFAULT_CSP_INTUITION.format(db=db_path),
        task_kind=TaskKind.CSP,
        parameters=params,
    )
    _run_session(task, cfg, backend_fixtures, autopilot, out, session_id, fixed_clock)


@run.command("csg")
@click.option("--n", "n_structures", type=int, default=10, show_default=True)
@_session_options
def run_csg(n_structures, db_path, hull_path, intuition, autopilot, config_path, out,
            backend_fixtures, session_id, fixed_clock):
    """Generate stable, novel crystal structures."""
    cfg = load_config(config_path)
    params = {"n": n_structures, "db_path": db_path, "seed": cfg.seed}
    if hull_path:
        params["hull_path"] = hull_path
    task = TaskSpec(
        task=f"Generate {n_structures} stable and novel crystal structures.",
        intuition=intuition
        if intuition is not None
        else DEFAULT_CSP_INTUITION.format(db=db_path),
        task_kind=TaskKind.CSG,
        parameters=params,
    )
    _run_session(task, cfg, backend_fixtures, autopilot, out, session_id, fixed_clock)


def parse_constraint(text: str) -> tuple[str, str, float]:
    for op in (">=", "<=", ">", "<"):
        if op in text:
            prop, value = text.split(op, 1)
            return prop.strip(), op, float(value.strip())
    raise ValueError(f"cannot parse constraint {text!r} (expected e.g. 'bandgap>3')")


@run.command("prop")
@click.option("--constraint", required=True, help="Property constraint, e.g. 'bandgap>3'.")
@_session_options
def run_prop(constraint, db_path, hull_path, intuition, autopilot, config_path, out,
             backend_fixtures, session_id, fixed_clock):
    """Generate structures satisfying a property constraint."""
    cfg = load_config(config_path)
    try:
        prop, op, threshold = parse_constraint(constraint)
    except ValueError as exc:
        _fail_domain(str(exc))
    params = {
        "constraint": constraint,
        "property": prop,
        "op": op,
        "threshold": threshold,
        "db_path": db_path,
    }
    if hull_path:
        params["hull_path"] = hull_path
    task = TaskSpec(
        task=f"Generate crystal structures with {prop} {op} {threshold}.",
        intuition=intuition
        if intuition is not None
        else DEFAULT_CSP_INTUITION.format(db=db_path),
        task_kind=TaskKind.PROPERTY_GUIDED,
        parameters=params,
    )
    _run_session(task, cfg, backend_fixtures, autopilot, out, session_id, fixed_clock)


# --- eval -----------------------------------------------------------------------


def load_structures(path: str) -> list[CrystalStructure]:
    """JSONL of structures: database records or bare structure objects."""
    structures = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                structures.append(CrystalStructure.from_dict(raw))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DatabaseError(f"line {line_no}: {exc}") from None
    return structures


def _make_calculator(calculator_cmd: str | None):
    if calculator_cmd:
        return SubprocessCalculator(shlex.split(calculator_cmd))
    return PairPotentialCalculator()


@main.group(name="eval")
def eval_group():
    """Evaluation pipelines (reports, tables, and figures)."""


@eval_group.command("gen")
@click.option("--candidates", required=True, type=click.Path(exists=True))
@click.option("--reference", required=True, type=click.Path(exists=True))
@click.option("--hull", "hull_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default="eval-gen")
@click.option("--workers", type=int, default=1)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--calculator-cmd", default=None,
              help="External calculator command (line-delimited JSON protocol).")
def eval_gen(candidates, reference, hull_path, out, workers, config_path, calculator_cmd):
    """Generation metrics: validity, stability, uniqueness, novelty, S.U.N."""
    cfg = load_config(config_path)
    apply_overrides(cfg, db_path=reference, hull_path=hull_path, workers=workers)
    cfg.apply_element_overrides()
    try:
        cand_structs = load_structures(candidates)
        reference_db = load_database(reference)
        hull_entries = load_hull_entries(hull_path)
    except (DatabaseError, OSError, ValueError) as exc:
        _fail_domain(str(exc))
    calc = _make_calculator(calculator_cmd)
    try:
        report, rows = evaluate_generation_detailed(
            cand_structs,
            reference_db,
            hull_entries,
            calc,
            cfg.tolerances(),
            relax_max_steps=cfg.relax_max_steps,
            relax_fmax=cfg.relax_fmax,
            workers=cfg.workers,
        )
    except ValueError as exc:
        _fail_domain(str(exc))
    echo_config(cfg, out)
    written = write_generation_outputs(report, rows, out, hull=build_hull(hull_entries))
    click.echo(generation_table(report), nl=False)
    click.echo(f"wrote: {', '.join(str(p) for p in written)}")


@eval_group.command("csp")
@click.option("--predictions", required=True, type=click.Path(exists=True))
@click.option("--ground-truth", "ground_truth", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default="eval-csp")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def eval_csp_cmd(predictions, ground_truth, out, config_path):
    """Match rate and RMSE of predictions against ground truths."""
    cfg = load_config(config_path)
    try:
        preds = load_structures(predictions)
        truths = load_structures(ground_truth)
        report = evaluate_csp(preds, truths, cfg.tolerances())
    except (DatabaseError, ValueError) as exc:
        _fail_domain(str(exc))
    pair_rows = []
    for i, (p, g) in enumerate(zip(preds, truths)):
        res = match(p, g, cfg.tolerances())
        pair_rows.append(
            {
                "index": i,
                "formula": reduced_formula(g.composition),
                "matched": res.matched,
                "rmse": res.rmse,
            }
        )
    echo_config(cfg, out)
    written = write_csp_outputs(report, pair_rows, out)
    click.echo(csp_table(report), nl=False)
    click.echo(f"wrote: {', '.join(str(p) for p in written)}")


@eval_group.command("workflows")
@click.option("--tasks", "tasks_path", required=True, type=click.Path(exists=True),
              help="JSON list of task specifications.")
@click.option("--trials", type=int, default=1, show_default=True)
@click.option("--no-intuition", is_flag=True, help="Blank out intuition before planning.")
@click.option("--backend-fixtures", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default="eval-workflows")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def eval_workflows(tasks_path, trials, no_intuition, backend_fixtures, out, config_path):
    """Planner validity audit: can generated workflows be dry-run validated?"""
    cfg = load_config(config_path)
    backend = _make_backend(cfg, backend_fixtures)
    with open(tasks_path) as fh:
        tasks = [TaskSpec.from_dict(d) for d in json.load(fh)]
    try:
        report = audit_workflows(
            backend, tasks, with_intuition=not no_intuition, trials=trials
        )
    except BackendError as exc:
        raise EnvironmentFailure(f"backend failure: {exc}") from exc
    echo_config(cfg, out)
    written = write_audit_outputs(report, out)
    click.echo(audit_table(report), nl=False)
    click.echo(f"wrote: {', '.join(str(p) for p in written)}")


# --- calc / serve ------------------------------------------------------------------


@main.group()
def calc():
    """Calculator utilities."""


@calc.command("serve")
def calc_serve():
    """Serve the built-in pair potential over the stdio JSON protocol."""
    serve_stdin(PairPotentialCalculator())


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8470, show_default=True)
@click.option("--workspace", type=click.Path(), default="sessions", show_default=True)
@click.option("--backend-fixtures", type=click.Path(exists=True), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--ui", "ui_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Static directory with the review dashboard build.")
@click.option("--token", default=None, help="Optional static bearer token.")
def serve(host, port, workspace, backend_fixtures, config_path, ui_dir, token):
    """Serve the session review HTTP API."""
    import uvicorn

    from .service import create_app

    cfg = load_config(config_path)
    if backend_fixtures:
        def backend_factory():
            return ScriptedBackend.from_file(backend_fixtures)
    else:
        def backend_factory():
            return backend_from_config(cfg.backend)

    app = create_app(
        backend_factory=backend_factory,
        workspace=workspace,
        ui_dir=ui_dir,
        token=token,
    )
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
