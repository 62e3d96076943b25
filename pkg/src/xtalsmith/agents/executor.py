"""Step execution with error-driven plan revision.

A step is performed by asking the backend for a tool plan, validating it,
and running it. Any validation or runtime failure becomes an error signal
that is fed back verbatim into a revision prompt; after ``max_retries``
revisions the step fails with the last signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .backend import DecodeParams, LanguageBackend
from .planner import WorkflowStep
from .prompts import render_tool_plan_prompt
from .toolbox import Toolbox, ToolContext
from .toolplan import ToolExecutionError, ToolPlan, ToolPlanError, parse_tool_plan, run_tool_plan

MAX_RETRIES = 3
SUMMARY_LIMIT = 4096


@dataclass(frozen=True)
class ErrorSignal:
    message: str
    failed_call_index: int | None
    attempt: int


@dataclass(frozen=True)
class StepResult:
    bindings: dict
    summary: str
    attempt: int = 0


@dataclass(frozen=True)
class StepContext:
    step: WorkflowStep
    previous_result: StepResult | None
    step_intuition: str

    def __post_init__(self):
        if (self.previous_result is None) != (self.step.index == 1):
            raise ValueError(
                "previous_result must be absent exactly for the first step"
            )


class StepFailedError(RuntimeError):
    """All plan attempts failed; carries the final error signal."""

    def __init__(self, signal: ErrorSignal, executions: int):
        super().__init__(signal.message)
        self.signal = signal
        self.executions = executions


def _describe(value) -> str:
    from ..core import CrystalStructure, reduced_formula
    from ..database import StructureRecord

    if isinstance(value, CrystalStructure):
        return f"structure {reduced_formula(value.composition)} ({value.n_sites} sites)"
    if isinstance(value, StructureRecord):
        return f"record {value.id}"
    if isinstance(value, list):
        if not value:
            return "[]"
        return f"list of {len(value)}: [{_describe(value[0])}, ...]"
    if isinstance(value, dict):
        inner = ", ".join(f"{k}={_describe(v)}" for k, v in value.items())
        return "{" + inner + "}"
    if isinstance(value, float):
        return f"{value:.6g}"
    return repr(value)


def summarize_bindings(bindings: dict) -> str:
    lines = [f"{name}: {_describe(value)}" for name, value in bindings.items()]
    text = "\n".join(lines) if lines else "(no outputs)"
    if len(text) > SUMMARY_LIMIT:
        marker = "\n...truncated"
        text = text[: SUMMARY_LIMIT - len(marker)] + marker
    return text


def generate_tool_plan(
    backend: LanguageBackend,
    ctx: StepContext,
    toolbox: Toolbox,
    context_names: set[str],
    error: ErrorSignal | None = None,
    decode: DecodeParams = DecodeParams(),
) -> ToolPlan:
    """One backend call producing a validated plan (no execution)."""
    if len(toolbox) == 0:
        raise ValueError("toolbox must not be empty")
    function_name = f"step{ctx.step.index}"
    prompt = render_tool_plan_prompt(
        function_name=function_name,
        step_description=ctx.step.description,
        previous_summary=ctx.previous_result.summary if ctx.previous_result else None,
        intuition=ctx.step_intuition,
        catalog=toolbox.catalog_text(),
        context_keys=sorted(context_names),
        error_text=error.message if error else None,
    )
    text = backend.complete(prompt, decode)
    return parse_tool_plan(text, function_name, toolbox, context_names)


def execute_with_reflection(
    backend: LanguageBackend,
    ctx: StepContext,
    toolbox: Toolbox,
    tool_ctx: ToolContext,
    env: dict,
    max_retries: int = MAX_RETRIES,
    decode: DecodeParams = DecodeParams(),
    emit=None,
) -> StepResult:
    """Run the step, revising the plan on each failure.

    ``env`` maps context names to live values available to plan references.
    ``emit(type, **payload)``, when given, receives plan/error milestones
    for event logging. Raises :class:`StepFailedError` once
    ``max_retries + 1`` plan executions have failed.
    """
    error: ErrorSignal | None = None
    context_names = set(env)
    for attempt in range(max_retries + 1):
        try:
            plan = generate_tool_plan(
                backend, ctx, toolbox, context_names, error, decode
            )
        except ToolPlanError as exc:
            error = ErrorSignal(str(exc), exc.call_index, attempt)
            if emit:
                emit(
                    "step_error",
                    step=ctx.step.index,
                    attempt=attempt,
                    message=error.message,
                    failed_call_index=error.failed_call_index,
                )
            continue
        if emit:
            emit(
                "plan_generated",
                step=ctx.step.index,
                attempt=attempt,
                plan=plan.as_dict(),
            )
        try:
            bindings = run_tool_plan(plan, toolbox, tool_ctx, env)
        except ToolExecutionError as exc:
            error = ErrorSignal(str(exc), exc.call_index, attempt)
            if emit:
                emit(
                    "step_error",
                    step=ctx.step.index,
                    attempt=attempt,
                    message=error.message,
                    failed_call_index=error.failed_call_index,
                )
            continue
        return StepResult(
            bindings=bindings,
            summary=summarize_bindings(bindings),
            attempt=attempt,
        )
    raise StepFailedError(error, executions=max_retries + 1)
