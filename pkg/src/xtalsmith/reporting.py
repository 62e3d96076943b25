"""Report rendering: aligned text tables, delimited files, and figures.

Every evaluation pipeline writes the same bundle into its output
directory: ``report.json`` (machine-readable), ``report.txt`` (aligned
table), a per-item CSV, and PNG figures rendered with matplotlib.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .hull import PhaseHull
from .metrics import CandidateRow, CspReport, GenerationReport, WorkflowAuditReport


def render_table(headers: list[str], rows: list[list]) -> str:
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for k, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _fmt(x, digits=4) -> str:
    if x is None:
        return "-"
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return f"{x:.{digits}f}"
    return str(x)


# --- generation -------------------------------------------------------------


def generation_table(report: GenerationReport) -> str:
    rows = [
        ["candidates", report.n_candidates],
        ["structural validity", _fmt(report.structural_validity_rate)],
        ["compositional validity", _fmt(report.compositional_validity_rate)],
        ["metastable (e_hull < 0.1)", _fmt(report.metastability_rate_0_1)],
        ["metastable (e_hull < 0.03)", _fmt(report.metastability_rate_0_03)],
        ["stable", _fmt(report.stability_rate)],
        ["unique (of stable)", _fmt(report.uniqueness_rate)],
        ["novel", _fmt(report.novelty_rate)],
        ["S.U.N.", _fmt(report.sun_rate)],
    ]
    return render_table(["metric", "value"], rows)


def _save_rates_figure(report: GenerationReport, path: Path) -> None:
    labels = [
        "struct.\nvalid",
        "comp.\nvalid",
        "metastable\n<0.1",
        "metastable\n<0.03",
        "stable",
        "unique",
        "novel",
        "S.U.N.",
    ]
    values = [
        report.structural_validity_rate,
        report.compositional_validity_rate,
        report.metastability_rate_0_1,
        report.metastability_rate_0_03,
        report.stability_rate,
        report.uniqueness_rate,
        report.novelty_rate,
        report.sun_rate,
    ]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(range(len(values)), values, color="#4878a8")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("rate")
    ax.set_title(f"Generation metrics over {report.n_candidates} candidates")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _save_ehull_figure(rows: list[CandidateRow], path: Path) -> None:
    xs = [r.index for r in rows if r.e_hull is not None]
    ys = [r.e_hull for r in rows if r.e_hull is not None]
    fig, ax = plt.subplots(figsize=(8, 4))
    if xs:
        ax.scatter(xs, ys, color="#a84848", zorder=3)
    for thr, style in ((0.0, "-"), (0.03, "--"), (0.1, ":")):
        ax.axhline(thr, color="gray", linestyle=style, linewidth=1)
    ax.set_xlabel("candidate index")
    ax.set_ylabel("energy above hull (eV/atom)")
    ax.set_title("Stability of relaxed candidates")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _save_binary_hull_figure(hull: PhaseHull, rows: list[CandidateRow], path: Path) -> None:
    if len(hull.elements) != 2:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    for facet in hull.facets:
        xs = [v[0][1] for v in facet.vertices]
        ys = [v[1] for v in facet.vertices]
        ax.plot(xs, ys, "-", color="#4878a8", zorder=2)
    ex = [e.composition.fractional().get(hull.elements[1], 0.0) for e in hull.entries]
    ey = [e.energy_per_atom for e in hull.entries]
    ax.scatter(ex, ey, marker="s", color="#333333", label="reference", zorder=3)
    ax.set_xlabel(f"x in {hull.elements[0]}(1-x) {hull.elements[1]}(x)")
    ax.set_ylabel("energy per atom (eV)")
    ax.set_title("Reference convex hull")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_generation_outputs(
    report: GenerationReport,
    rows: list[CandidateRow],
    outdir: str | Path,
    hull: PhaseHull | None = None,
) -> list[Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    p = out / "report.json"
    p.write_text(report.to_json())
    written.append(p)

    p = out / "report.txt"
    p.write_text(generation_table(report))
    written.append(p)

    p = out / "candidates.csv"
    with open(p, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(asdict(rows[0]).keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow(asdict(row))
    written.append(p)

    p = out / "rates.png"
    _save_rates_figure(report, p)
    written.append(p)
    p = out / "e_hull.png"
    _save_ehull_figure(rows, p)
    written.append(p)
    if hull is not None and len(hull.elements) == 2:
        p = out / "hull.png"
        _save_binary_hull_figure(hull, rows, p)
        written.append(p)
    return written


# --- structure prediction ---------------------------------------------------


def csp_table(report: CspReport) -> str:
    rows = [
        ["pairs", report.n_pairs],
        ["match rate", _fmt(report.match_rate)],
        ["mean rmse", _fmt(report.mean_rmse, 6)],
    ]
    return render_table(["metric", "value"], rows)


def write_csp_outputs(
    report: CspReport, pair_rows: list[dict], outdir: str | Path
) -> list[Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "report.json"
    p.write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    written.append(p)
    p = out / "report.txt"
    p.write_text(csp_table(report))
    written.append(p)
    p = out / "pairs.csv"
    with open(p, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["index", "formula", "matched", "rmse"])
        writer.writeheader()
        for row in pair_rows:
            writer.writerow(row)
    written.append(p)

    rmses = [r["rmse"] for r in pair_rows if r["rmse"] is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    if rmses:
        ax.hist(rmses, bins=min(20, max(3, len(rmses))), color="#4878a8")
    ax.set_xlabel("rmse (normalized)")
    ax.set_ylabel("matched pairs")
    ax.set_title(f"Match rate {report.match_rate:.3f} over {report.n_pairs} pairs")
    fig.tight_layout()
    p = out / "rmse.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    written.append(p)
    return written


# --- workflow audit -----------------------------------------------------------


def audit_table(report: WorkflowAuditReport) -> str:
    rows = []
    for r in report.rows:
        rows.append(
            [
                r.task_kind,
                r.trials,
                _fmt(r.validity_rate),
                _fmt(r.mean_length, 2),
            ]
        )
    rows.append(
        [
            "overall",
            sum(r.trials for r in report.rows),
            _fmt(report.overall_validity_rate),
            _fmt(report.mean_workflow_length, 2),
        ]
    )
    return render_table(["task", "trials", "validity", "mean length"], rows)


def write_audit_outputs(report: WorkflowAuditReport, outdir: str | Path) -> list[Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "report.json"
    p.write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    written.append(p)
    p = out / "report.txt"
    p.write_text(audit_table(report))
    written.append(p)
    p = out / "audit.csv"
    with open(p, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["task_kind", "task", "trials", "n_valid", "validity_rate", "mean_length"]
        )
        writer.writeheader()
        for r in report.rows:
            writer.writerow(
                {
                    "task_kind": r.task_kind,
                    "task": r.task,
                    "trials": r.trials,
                    "n_valid": r.n_valid,
                    "validity_rate": r.validity_rate,
                    "mean_length": r.mean_length,
                }
            )
    written.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    labels = [r.task_kind for r in report.rows]
    values = [r.validity_rate for r in report.rows]
    ax.bar(range(len(values)), values, color="#48a878")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("workflow validity rate")
    intuition = "with" if report.with_intuition else "without"
    ax.set_title(f"Planner audit ({intuition} intuition)")
    fig.tight_layout()
    p = out / "validity.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    written.append(p)
    return written
