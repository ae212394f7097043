"""REST service for session management and SME review.

Endpoints (JSON unless noted):

    POST /sessions                         create a session from a full config body
    GET  /sessions                         list known sessions
    GET  /sessions/{sid}                   state summary
    POST /sessions/{sid}/advance           run the current round synchronously
    GET  /sessions/{sid}/fmea?format=csv|json   export (csv streamed verbatim)
    GET  /sessions/{sid}/banks?kind=&limit=&offset=   records page
    GET  /sessions/{sid}/events?after=&wait=    event feed (long-poll via wait seconds)
    GET  /sessions/{sid}/answers/{aid}/trace    provenance chain for one answer
    POST /sessions/{sid}/rows/{rid}/review      approve | reject | edit a row

Per-session mutations are serialized by an exclusive lock; reads never block
reads. Sessions persisted under the server's data_dir are loadable after a
restart.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException, Query, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from fmea_panel.banks import KINDS
from fmea_panel.config import ConfigError, SessionConfig, load_config
from fmea_panel.domain import ValidationError
from fmea_panel.engine import BackendError, NotFoundError, PreconditionError, Session

LONG_POLL_MAX_WAIT = 30.0
LONG_POLL_TICK = 0.05


class SessionRegistry:
    """In-memory session cache over the on-disk session directories."""

    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def add(self, session: Session) -> None:
        with self._registry_lock:
            self._sessions[session.session_id] = session
            self._locks.setdefault(session.session_id, threading.Lock())

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            if session_id in self._sessions:
                return self._sessions[session_id]
        session_dir = self.data_dir / session_id
        try:
            session = Session.open(session_dir)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}") from exc
        self.add(session)
        return session

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def list_ids(self) -> list[str]:
        known = set(self._sessions)
        if self.data_dir.is_dir():
            for child in self.data_dir.iterdir():
                if (child / "state.json").is_file():
                    known.add(child.name)
        return sorted(known)


def create_app(data_dir: str | Path = "./data", static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="fmea-panel", version="0.1.0")
    registry = SessionRegistry(Path(data_dir))
    app.state.registry = registry

    @app.exception_handler(ValidationError)
    def _validation_error(request, exc: ValidationError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.post("/sessions", status_code=201)
    def create_session(body: dict = Body(...)):
        try:
            config: SessionConfig = load_config(body, base_dir=".")
        except ConfigError as exc:
            raise HTTPException(
                status_code=422,
                detail=[{"field": path, "message": message} for path, message in exc.errors],
            ) from exc
        try:
            session = Session.create(config, data_dir=registry.data_dir)
        except PreconditionError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        registry.add(session)
        return {"session_id": session.session_id, "state": session.summary()}

    @app.get("/sessions")
    def list_sessions():
        return {"sessions": registry.list_ids()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return registry.get(session_id).summary()

    @app.post("/sessions/{session_id}/advance")
    def advance(session_id: str):
        session = registry.get(session_id)
        with registry.lock(session_id):
            try:
                report = session.run_round()
            except PreconditionError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            except BackendError as exc:
                raise HTTPException(status_code=502, detail=str(exc)) from exc
        return {"report": report.to_payload(), "state": session.summary()}

    @app.get("/sessions/{session_id}/fmea")
    def export_fmea(session_id: str, format: str = Query("csv")):
        if format not in ("csv", "json"):
            raise HTTPException(status_code=400, detail="format must be csv or json")
        session = registry.get(session_id)
        payload = session.export(format)
        media = "text/csv; charset=utf-8" if format == "csv" else "application/json"
        return Response(content=payload, media_type=media)

    @app.get("/sessions/{session_id}/banks")
    def read_bank(
        session_id: str,
        kind: str = Query(...),
        limit: int = Query(100, ge=1, le=1000),
        offset: int = Query(0, ge=0),
    ):
        if kind not in KINDS:
            raise HTTPException(status_code=400, detail=f"kind must be one of {', '.join(KINDS)}")
        session = registry.get(session_id)
        records = session.banks.by_kind(kind).records()
        return {
            "kind": kind,
            "total": len(records),
            "offset": offset,
            "records": records[offset : offset + limit],
        }

    @app.get("/sessions/{session_id}/events")
    def read_events(
        session_id: str,
        after: int = Query(0, ge=0),
        wait: float = Query(0.0, ge=0.0, le=LONG_POLL_MAX_WAIT),
    ):
        session = registry.get(session_id)
        deadline = time.monotonic() + wait
        while True:
            events = [e for e in session.banks.events.records() if e["seq"] > after]
            if events or time.monotonic() >= deadline:
                next_after = events[-1]["seq"] if events else after
                return {"events": events, "next_after": next_after}
            time.sleep(LONG_POLL_TICK)

    @app.get("/sessions/{session_id}/answers/{answer_id}/trace")
    def answer_trace(session_id: str, answer_id: str):
        session = registry.get(session_id)
        try:
            return session.trace_for_answer(answer_id)
        except NotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/sessions/{session_id}/rows/{row_id}/review")
    def review_row(session_id: str, row_id: str, body: dict = Body(...)):
        session = registry.get(session_id)
        action = body.get("action")
        comment = body.get("comment")
        edits = body.get("edits")
        with registry.lock(session_id):
            try:
                row, requeued = session.incorporate_feedback(
                    row_id, action, comment=comment, edits=edits
                )
            except NotFoundError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            except PreconditionError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            except ValidationError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"row": row, "requeued_question_id": requeued}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
