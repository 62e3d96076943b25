"""Session state machine mediating between planner, executor, and reviewer.

Sessions are event-sourced: every transition appends events, and the whole
session state is a pure fold over the event list, so replaying a persisted
log reconstructs the state exactly. Transition preconditions are enforced
against the folded state; an illegal call raises
:class:`IllegalTransitionError` naming the current state.

State machine::

    AwaitingTask --submit_task--> PlanProposed
    PlanProposed --review_plan(approve)--> PlanApproved
    PlanProposed --review_plan(revise)--> PlanProposed     (new plan)
    PlanApproved --run_step--> StepExecuting --> StepReview (or Failed)
    StepReview --review_step(approve)--> PlanApproved | Completed
    StepReview --review_step(feedback)--> StepExecuting --> StepReview
    StepReview --review_step(abort)--> Failed
"""

from __future__ import annotations

import enum
import json
import time
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .backend import BackendError, LanguageBackend
from .executor import (
    StepContext,
    StepFailedError,
    StepResult,
    execute_with_reflection,
)
from .planner import (
    StepCountError,
    TaskSpec,
    WorkflowParseError,
    WorkflowStep,
    StepStatus,
    plan_workflow,
)
from .serialize import from_jsonable, to_jsonable
from .toolbox import Toolbox, ToolContext, default_toolbox


class SessionState(str, enum.Enum):
    AWAITING_TASK = "AwaitingTask"
    PLAN_PROPOSED = "PlanProposed"
    PLAN_APPROVED = "PlanApproved"
    STEP_EXECUTING = "StepExecuting"
    STEP_REVIEW = "StepReview"
    COMPLETED = "Completed"
    FAILED = "Failed"


class IllegalTransitionError(RuntimeError):
    def __init__(self, action: str, state: SessionState):
        super().__init__(f"cannot {action} in state {state.value}")
        self.state = state


class PlanVerdict:
    APPROVE = "approve"
    REVISE = "revise"


class StepVerdict:
    APPROVE = "approve"
    FEEDBACK = "feedback"
    ABORT = "abort"


class AutopilotPolicy(str, enum.Enum):
    APPROVE_ALL = "ApproveAll"
    APPROVE_PLANS_ONLY = "ApproveAllPlansOnly"


@dataclass
class FoldedState:
    """Session state as the fold of the event log (JSON-safe throughout)."""

    state: str = SessionState.AWAITING_TASK.value
    task: dict | None = None
    plan_feedback: list = field(default_factory=list)
    workflow: dict | None = None
    current_step: int = 0
    step_results: dict = field(default_factory=dict)
    step_plans: dict = field(default_factory=dict)
    step_errors: list = field(default_factory=list)
    step_intuitions: dict = field(default_factory=dict)
    failure_reason: str | None = None
    n_events: int = 0
    created_ts: float | None = None
    updated_ts: float | None = None

    def as_dict(self) -> dict:
        return {
            "state": self.state,
            "task": self.task,
            "plan_feedback": self.plan_feedback,
            "workflow": self.workflow,
            "current_step": self.current_step,
            "step_results": self.step_results,
            "step_plans": self.step_plans,
            "step_errors": self.step_errors,
            "step_intuitions": self.step_intuitions,
            "failure_reason": self.failure_reason,
            "n_events": self.n_events,
            "created_ts": self.created_ts,
            "updated_ts": self.updated_ts,
        }


def _fold_one(st: FoldedState, event: dict) -> FoldedState:
    etype = event["type"]
    st.n_events += 1
    if st.created_ts is None:
        st.created_ts = event.get("ts")
    st.updated_ts = event.get("ts")

    if etype == "task_submitted":
        st.task = event["task"]
    elif etype == "plan_proposed":
        st.workflow = {
            "raw_text": event["workflow"]["raw_text"],
            "steps": [
                {
                    "index": s["index"],
                    "description": s["description"],
                    "status": StepStatus.PENDING.value,
                }
                for s in event["workflow"]["steps"]
            ],
        }
        st.state = SessionState.PLAN_PROPOSED.value
    elif etype == "plan_verdict":
        if event["verdict"] == PlanVerdict.APPROVE:
            for s in st.workflow["steps"]:
                s["status"] = StepStatus.APPROVED.value
            st.current_step = 1
            st.state = SessionState.PLAN_APPROVED.value
        else:
            st.plan_feedback.append(event.get("feedback") or "")
            st.state = SessionState.PLAN_PROPOSED.value
    elif etype == "step_started":
        t = event["step"]
        st.workflow["steps"][t - 1]["status"] = StepStatus.EXECUTING.value
        st.step_intuitions[str(t)] = event.get("intuition", "")
        st.state = SessionState.STEP_EXECUTING.value
    elif etype == "plan_generated":
        st.step_plans.setdefault(str(event["step"]), []).append(event["plan"])
    elif etype == "step_error":
        st.step_errors.append(
            {
                "step": event["step"],
                "attempt": event["attempt"],
                "message": event["message"],
                "failed_call_index": event.get("failed_call_index"),
            }
        )
    elif etype == "step_completed":
        t = event["step"]
        st.step_results[str(t)] = {
            "summary": event["result"]["summary"],
            "bindings": event["result"]["bindings"],
            "attempt": event["result"]["attempt"],
        }
        st.state = SessionState.STEP_REVIEW.value
    elif etype == "step_failed":
        t = event["step"]
        st.workflow["steps"][t - 1]["status"] = StepStatus.FAILED.value
        st.failure_reason = event["message"]
        st.state = SessionState.FAILED.value
    elif etype == "step_verdict":
        t = st.current_step
        verdict = event["verdict"]
        if verdict == StepVerdict.APPROVE:
            st.workflow["steps"][t - 1]["status"] = StepStatus.DONE.value
            if t == len(st.workflow["steps"]):
                st.state = SessionState.COMPLETED.value
            else:
                st.current_step = t + 1
                st.state = SessionState.PLAN_APPROVED.value
        elif verdict == StepVerdict.FEEDBACK:
            # step stays current; a re-execution follows
            st.state = SessionState.PLAN_APPROVED.value
        else:  # abort
            st.failure_reason = f"aborted by reviewer at step {t}"
            st.state = SessionState.FAILED.value
    else:
        raise ValueError(f"unknown event type {etype!r}")
    return st


def replay(events: list[dict]) -> FoldedState:
    """Fold an event list into session state (pure, no side effects)."""
    st = FoldedState()
    for event in events:
        _fold_one(st, event)
    return st


def state_fingerprint(st: FoldedState) -> str:
    return json.dumps(st.as_dict(), sort_keys=True)


class Session:
    """One mediated task run. Transitions are serialized by an internal lock;
    distinct sessions are fully independent."""

    def __init__(
        self,
        backend: LanguageBackend,
        toolbox: Toolbox | None = None,
        tool_ctx: ToolContext | None = None,
        workspace: str | Path | None = None,
        session_id: str | None = None,
        clock=time.time,
        max_retries: int = 3,
    ):
        self.id = session_id or uuid.uuid4().hex[:12]
        self.backend = backend
        self.toolbox = toolbox or default_toolbox()
        self.clock = clock
        self.max_retries = max_retries
        self.events: list[dict] = []
        self._lock = threading.RLock()
        self._listeners: list = []
        self.workspace = Path(workspace) / self.id if workspace else None
        if self.workspace:
            self.workspace.mkdir(parents=True, exist_ok=True)
        self.tool_ctx = tool_ctx or ToolContext(workspace=self.workspace)
        if self.tool_ctx.workspace is None and self.workspace is not None:
            self.tool_ctx.workspace = self.workspace
        self._state = FoldedState()

    # -- event plumbing ------------------------------------------------------

    @property
    def state(self) -> FoldedState:
        return self._state

    def status(self) -> SessionState:
        return SessionState(self._state.state)

    def add_listener(self, fn) -> None:
        """fn(event_dict) is called after each appended event."""
        self._listeners.append(fn)

    def _emit(self, etype: str, **payload) -> None:
        event = {"seq": len(self.events) + 1, "ts": self.clock(), "type": etype}
        event.update(payload)
        self.events.append(event)
        self._state = _fold_one(self._state, event)
        if self.workspace:
            with open(self.workspace / "events.jsonl", "a") as fh:
                fh.write(json.dumps(event) + "\n")
        for fn in list(self._listeners):
            fn(event)

    def _require(self, action: str, *allowed: SessionState) -> None:
        if self.status() not in allowed:
            raise IllegalTransitionError(action, self.status())

    def snapshot(self) -> dict:
        d = self._state.as_dict()
        d["session_id"] = self.id
        return d

    def verify_replay(self) -> bool:
        return state_fingerprint(replay(self.events)) == state_fingerprint(self._state)

    # -- transitions ----------------------------------------------------------

    def submit_task(self, task: TaskSpec) -> SessionState:
        with self._lock:
            self._require("submit_task", SessionState.AWAITING_TASK)
            self._emit("task_submitted", task=task.as_dict())
            return self.propose_plan()

    def propose_plan(self) -> SessionState:
        with self._lock:
            if self._state.task is None:
                raise IllegalTransitionError("propose_plan", self.status())
            task = TaskSpec.from_dict(self._state.task)
            workflow = plan_workflow(
                self.backend, task, feedback=list(self._state.plan_feedback)
            )
            self._emit(
                "plan_proposed",
                workflow={
                    "raw_text": workflow.raw_text,
                    "steps": [
                        {"index": s.index, "description": s.description}
                        for s in workflow.steps
                    ],
                },
            )
            return self.status()

    def review_plan(self, verdict: str, feedback: str | None = None) -> SessionState:
        with self._lock:
            self._require("review_plan", SessionState.PLAN_PROPOSED)
            if verdict not in (PlanVerdict.APPROVE, PlanVerdict.REVISE):
                raise ValueError(f"unknown plan verdict {verdict!r}")
            self._emit("plan_verdict", verdict=verdict, feedback=feedback)
            if verdict == PlanVerdict.REVISE:
                return self.propose_plan()
            return self.status()

    def _environment(self, before_step: int) -> dict:
        """Live values visible to plan references: task parameters plus the
        bindings of steps completed before ``before_step`` (a re-executed
        step must not see its own earlier outputs)."""
        env = {}
        task = self._state.task or {}
        for key, value in (task.get("parameters") or {}).items():
            env[key] = value
        for t in sorted(self._state.step_results, key=int):
            if int(t) >= before_step:
                continue
            bindings = self._state.step_results[t]["bindings"]
            env.update({k: from_jsonable(v) for k, v in bindings.items()})
        return env

    def _effective_intuition(self, t: int, feedback: str | None = None) -> str:
        task = TaskSpec.from_dict(self._state.task)
        base = task.step_intuitions.get(t, task.intuition)
        if feedback:
            return (base + "\nReviewer feedback: " + feedback).strip()
        return base

    def _execute_current(self, feedback: str | None = None) -> SessionState:
        t = self._state.current_step
        step_info = self._state.workflow["steps"][t - 1]
        intuition = self._effective_intuition(t, feedback)
        self._emit("step_started", step=t, intuition=intuition)

        previous = None
        if t > 1:
            prev = self._state.step_results.get(str(t - 1))
            if prev is not None:
                previous = StepResult(
                    bindings={
                        k: from_jsonable(v) for k, v in prev["bindings"].items()
                    },
                    summary=prev["summary"],
                    attempt=prev["attempt"],
                )
        ctx = StepContext(
            step=WorkflowStep(index=t, description=step_info["description"]),
            previous_result=previous,
            step_intuition=intuition,
        )
        try:
            result = execute_with_reflection(
                self.backend,
                ctx,
                self.toolbox,
                self.tool_ctx,
                env=self._environment(before_step=t),
                max_retries=self.max_retries,
                emit=self._emit,
            )
        except StepFailedError as exc:
            self._emit("step_failed", step=t, message=exc.signal.message)
            self._finalize()
            return self.status()
        except BackendError as exc:
            self._emit("step_failed", step=t, message=f"backend failure: {exc}")
            self._finalize()
            return self.status()
        self._emit(
            "step_completed",
            step=t,
            result={
                "summary": result.summary,
                "bindings": to_jsonable(result.bindings),
                "attempt": result.attempt,
            },
        )
        return self.status()

    def run_step(self) -> SessionState:
        with self._lock:
            self._require("run_step", SessionState.PLAN_APPROVED)
            return self._execute_current()

    def review_step(self, verdict: str, feedback: str | None = None) -> SessionState:
        with self._lock:
            self._require("review_step", SessionState.STEP_REVIEW)
            if verdict not in (
                StepVerdict.APPROVE,
                StepVerdict.FEEDBACK,
                StepVerdict.ABORT,
            ):
                raise ValueError(f"unknown step verdict {verdict!r}")
            if verdict == StepVerdict.FEEDBACK and not feedback:
                raise ValueError("feedback verdict requires feedback text")
            self._emit("step_verdict", verdict=verdict, feedback=feedback)
            if verdict == StepVerdict.FEEDBACK:
                return self._execute_current(feedback=feedback)
            if self.status() in (SessionState.COMPLETED, SessionState.FAILED):
                self._finalize()
            return self.status()

    def autopilot(self, policy: AutopilotPolicy = AutopilotPolicy.APPROVE_ALL) -> SessionState:
        """Drive the session by auto-approving per policy.

        ApproveAll runs to a terminal state. ApproveAllPlansOnly approves
        the plan and runs the first step, then yields at StepReview for a
        human verdict.
        """
        with self._lock:
            if self.status() == SessionState.PLAN_PROPOSED:
                self.review_plan(PlanVerdict.APPROVE)
            while self.status() == SessionState.PLAN_APPROVED:
                self.run_step()
                if self.status() != SessionState.STEP_REVIEW:
                    break
                if policy == AutopilotPolicy.APPROVE_PLANS_ONLY:
                    return self.status()
                self.review_step(StepVerdict.APPROVE)
            return self.status()

    # -- outputs ---------------------------------------------------------------

    def _finalize(self) -> None:
        if self.workspace is None:
            return
        report = {
            "session_id": self.id,
            "state": self._state.state,
            "task": self._state.task,
            "workflow": self._state.workflow,
            "step_results": {
                t: {"summary": r["summary"], "attempt": r["attempt"]}
                for t, r in self._state.step_results.items()
            },
            "step_errors": self._state.step_errors,
            "failure_reason": self._state.failure_reason,
            "artifacts": sorted(
                p.name for p in (self.workspace / "artifacts").glob("*")
            )
            if (self.workspace / "artifacts").is_dir()
            else [],
        }
        with open(self.workspace / "final_report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)

    @classmethod
    def from_event_log(
        cls,
        path: str | Path,
        backend: LanguageBackend,
        toolbox: Toolbox | None = None,
        **kwargs,
    ) -> "Session":
        """Rebuild a session object from a persisted event log."""
        events = []
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    events.append(json.loads(line))
        session = cls(backend, toolbox, **kwargs)
        session.events = events
        session._state = replay(events)
        return session
