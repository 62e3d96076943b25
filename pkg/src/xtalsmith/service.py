"""HTTP facade over mediated sessions for review clients.

Every endpoint maps 1:1 onto a mediator transition; responses carry the
new session state. State changes stream over server-sent events: a
connection first replays the session history, then tails new events.
Sessions persist as event logs under the workspace directory and are
replayed on restart.
"""

from __future__ import annotations

import json
import queue
import threading
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import FileResponse, StreamingResponse
from pydantic import BaseModel, Field

from .agents.backend import BackendError, LanguageBackend
from .agents.mediator import IllegalTransitionError, Session, SessionState
from .agents.planner import StepCountError, TaskSpec, WorkflowParseError
from .agents.toolbox import Toolbox

ARTIFACT_MEDIA_TYPES = {
    ".cif": "chemical/x-cif",
    ".json": "application/json",
    ".txt": "text/plain",
}


class TaskBody(BaseModel):
    task: str = Field(min_length=1)
    intuition: str = ""
    task_kind: str = "csp"
    parameters: dict = Field(default_factory=dict)
    step_intuitions: dict[str, str] = Field(default_factory=dict)


class PlanVerdictBody(BaseModel):
    verdict: str = Field(pattern="^(approve|revise)$")
    feedback: str | None = None


class StepVerdictBody(BaseModel):
    verdict: str = Field(pattern="^(approve|feedback|abort)$")
    feedback: str | None = None


class SessionStore:
    def __init__(self, factory):
        self._factory = factory
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self) -> Session:
        session = self._factory()
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    def all(self) -> list[Session]:
        with self._lock:
            return sorted(self._sessions.values(), key=lambda s: s.id)

    def adopt(self, session: Session) -> None:
        with self._lock:
            self._sessions[session.id] = session


def _summary(session: Session) -> dict:
    st = session.state
    return {
        "id": session.id,
        "state": st.state,
        "task": (st.task or {}).get("task"),
        "current_step": st.current_step,
        "n_steps": len(st.workflow["steps"]) if st.workflow else 0,
        "created_ts": st.created_ts,
        "updated_ts": st.updated_ts,
    }


def create_app(
    backend_factory,
    workspace: str | Path = "sessions",
    toolbox: Toolbox | None = None,
    ui_dir: str | Path | None = None,
    token: str | None = None,
    clock=None,
    session_id_factory=None,
) -> FastAPI:
    """Application factory.

    ``backend_factory() -> LanguageBackend`` is invoked once per session so
    stateful scripted backends stay session-local. Existing event logs in
    the workspace are replayed into live (review-only) sessions on start.
    """
    app = FastAPI(title="xtalsmith session service", version="0.1.0")
    workspace = Path(workspace)
    workspace.mkdir(parents=True, exist_ok=True)

    def new_session() -> Session:
        kwargs = {}
        if clock is not None:
            kwargs["clock"] = clock
        if session_id_factory is not None:
            kwargs["session_id"] = session_id_factory()
        return Session(
            backend_factory(), toolbox=toolbox, workspace=workspace, **kwargs
        )

    store = SessionStore(new_session)
    app.state.store = store

    for log in sorted(workspace.glob("*/events.jsonl")):
        try:
            session = Session.from_event_log(
                log, backend_factory(), toolbox=toolbox, session_id=log.parent.name
            )
            session.workspace = log.parent
            store.adopt(session)
        except (json.JSONDecodeError, ValueError, OSError):
            continue  # unreadable log; leave it on disk untouched

    def check_token(request: Request):
        if token is None:
            return
        supplied = request.headers.get("authorization", "")
        if supplied != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or bad bearer token")

    auth = Depends(check_token)

    @app.exception_handler(IllegalTransitionError)
    async def illegal_transition(request, exc: IllegalTransitionError):
        from fastapi.responses import JSONResponse

        return JSONResponse(
            status_code=409,
            content={"detail": str(exc), "state": exc.state.value},
        )

    @app.exception_handler(BackendError)
    async def backend_error(request, exc: BackendError):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=502, content={"detail": str(exc)})

    @app.post("/sessions", status_code=201, dependencies=[auth])
    def create_session(body: TaskBody):
        try:
            task = TaskSpec.from_dict(body.model_dump())
        except (ValueError, KeyError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        session = store.create()
        try:
            session.submit_task(task)
        except (WorkflowParseError, StepCountError) as exc:
            raise HTTPException(status_code=502, detail=f"planner failure: {exc}") from exc
        return {"id": session.id, "state": session.state.state}

    @app.get("/sessions", dependencies=[auth])
    def list_sessions():
        return [_summary(s) for s in store.all()]

    @app.get("/sessions/{session_id}", dependencies=[auth])
    def get_session(session_id: str):
        return store.get(session_id).snapshot()

    @app.post("/sessions/{session_id}/plan/verdict", dependencies=[auth])
    def plan_verdict(session_id: str, body: PlanVerdictBody):
        session = store.get(session_id)
        state = session.review_plan(body.verdict, body.feedback)
        return {"id": session.id, "state": state.value}

    @app.post("/sessions/{session_id}/steps/current/run", dependencies=[auth])
    def run_step(session_id: str):
        session = store.get(session_id)
        state = session.run_step()
        return {
            "id": session.id,
            "state": state.value,
            "current_step": session.state.current_step,
        }

    @app.post("/sessions/{session_id}/steps/current/verdict", dependencies=[auth])
    def step_verdict(session_id: str, body: StepVerdictBody):
        session = store.get(session_id)
        try:
            state = session.review_step(body.verdict, body.feedback)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"id": session.id, "state": state.value}

    @app.get("/sessions/{session_id}/events", dependencies=[auth])
    def event_stream(session_id: str, follow: bool = True, timeout: float = 30.0):
        session = store.get(session_id)

        def sse(event: dict, state: str) -> str:
            payload = json.dumps({"event": event, "state": state})
            return f"id: {event['seq']}\nevent: session\ndata: {payload}\n\n"

        def generate():
            q: queue.Queue = queue.Queue()
            listener = q.put
            with session._lock:
                history = list(session.events)
                if follow:
                    session.add_listener(listener)
            try:
                # the state attached to historical events is replayed
                from .agents.mediator import replay

                folded = None
                for i, event in enumerate(history):
                    folded = replay(history[: i + 1])
                    yield sse(event, folded.state)
                if not follow:
                    return
                waited = 0.0
                while waited < timeout:
                    try:
                        event = q.get(timeout=1.0)
                        waited = 0.0
                    except queue.Empty:
                        waited += 1.0
                        yield ": keepalive\n\n"
                        continue
                    yield sse(event, session.state.state)
                    if session.status() in (
                        SessionState.COMPLETED,
                        SessionState.FAILED,
                    ):
                        return
            finally:
                if listener in session._listeners:
                    session._listeners.remove(listener)

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/artifacts/{name}", dependencies=[auth])
    def artifact(session_id: str, name: str):
        session = store.get(session_id)
        if "/" in name or "\\" in name or name.startswith("."):
            raise HTTPException(status_code=404, detail="no such artifact")
        if session.workspace is None:
            raise HTTPException(status_code=404, detail="session has no workspace")
        path = session.workspace / "artifacts" / name
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"no artifact {name!r}")
        media = ARTIFACT_MEDIA_TYPES.get(path.suffix, "application/octet-stream")
        return FileResponse(path, media_type=media)

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
