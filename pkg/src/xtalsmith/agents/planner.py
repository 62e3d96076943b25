"""Task specifications, workflows, and the planning call.

Workflow text is parsed with a deliberately small grammar: one step per
``Step N: description`` line, numbered consecutively from 1. Anything
else (including the trailing approval note) is ignored.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .backend import DecodeParams, LanguageBackend
from .prompts import MAX_WORKFLOW_STEPS, REPROMPT_NOTE, render_planner_prompt


class TaskKind(str, enum.Enum):
    CSG = "csg"
    CSP = "csp"
    PROPERTY_GUIDED = "property"


class StepStatus(str, enum.Enum):
    PENDING = "Pending"
    APPROVED = "Approved"
    EXECUTING = "Executing"
    DONE = "Done"
    FAILED = "Failed"


class WorkflowParseError(ValueError):
    """Planner output did not follow the step-per-line grammar."""


class StepCountError(ValueError):
    """Planner produced more steps than the workflow bound allows."""


@dataclass(frozen=True)
class TaskSpec:
    task: str
    intuition: str = ""
    task_kind: TaskKind = TaskKind.CSP
    parameters: dict = field(default_factory=dict)
    step_intuitions: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.task.strip():
            raise ValueError("task description must be non-empty")

    def as_dict(self) -> dict:
        return {
            "task": self.task,
            "intuition": self.intuition,
            "task_kind": self.task_kind.value,
            "parameters": dict(self.parameters),
            "step_intuitions": {str(k): v for k, v in self.step_intuitions.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(
            task=d["task"],
            intuition=d.get("intuition", ""),
            task_kind=TaskKind(d.get("task_kind", "csp")),
            parameters=dict(d.get("parameters", {})),
            step_intuitions={int(k): v for k, v in d.get("step_intuitions", {}).items()},
        )


@dataclass(frozen=True)
class WorkflowStep:
    index: int  # 1-based
    description: str
    status: StepStatus = StepStatus.PENDING


@dataclass(frozen=True)
class Workflow:
    steps: tuple[WorkflowStep, ...]
    raw_text: str

    def __post_init__(self):
        if not 1 <= len(self.steps) <= MAX_WORKFLOW_STEPS:
            raise StepCountError(
                f"workflow must have 1..{MAX_WORKFLOW_STEPS} steps, "
                f"got {len(self.steps)}"
            )

    @property
    def T(self) -> int:
        return len(self.steps)


_STEP_RE = re.compile(r"^\s*Step\s+(\d+)\s*[:.]\s*(.+?)\s*$")


def parse_workflow_steps(text: str) -> list[str]:
    """Step descriptions in order; raises on gaps, repeats, or no steps."""
    found: dict[int, str] = {}
    for line in text.splitlines():
        m = _STEP_RE.match(line)
        if not m:
            continue
        idx = int(m.group(1))
        if idx in found:
            raise WorkflowParseError(f"duplicate step number {idx}")
        found[idx] = m.group(2)
    if not found:
        raise WorkflowParseError("no 'Step N:' lines found")
    expected = list(range(1, len(found) + 1))
    if sorted(found) != expected:
        raise WorkflowParseError(
            f"step numbers {sorted(found)} are not consecutive from 1"
        )
    return [found[i] for i in expected]


def workflow_from_text(text: str) -> Workflow:
    descriptions = parse_workflow_steps(text)
    steps = tuple(
        WorkflowStep(index=i + 1, description=d) for i, d in enumerate(descriptions)
    )
    return Workflow(steps=steps, raw_text=text)


def plan_workflow(
    backend: LanguageBackend,
    task: TaskSpec,
    feedback: list[str] | None = None,
    decode: DecodeParams = DecodeParams(),
    max_parse_attempts: int = 3,
) -> Workflow:
    """Render the planner prompt, call the backend, parse the workflow.

    Unparseable output is re-prompted up to twice with a format reminder;
    a step-count violation is rejected immediately.
    """
    prompt = render_planner_prompt(task.task, task.intuition, feedback)
    last_error: WorkflowParseError | None = None
    for attempt in range(max_parse_attempts):
        text = backend.complete(prompt, decode)
        try:
            return workflow_from_text(text)
        except WorkflowParseError as exc:
            last_error = exc
            prompt = prompt + "\n" + REPROMPT_NOTE + "\n"
    raise WorkflowParseError(
        f"unparseable after {max_parse_attempts - 1} re-prompts: {last_error}"
    )
