"""HTTP surface for the UI and automation.

JSON over HTTP under /api: session creation, dataset upload with preview,
message posting (runs turns asynchronously), live server-sent event
streaming with full replay, artifact retrieval and benchmark rows. The
event stream is one-way; messages arrive over plain POST.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, UploadFile
from fastapi.responses import FileResponse, PlainTextResponse, StreamingResponse

from .bench import read_rows
from .config import Config, DEFAULT_CONFIG
from .errors import LadsError, TurnInProgress, UnsupportedFormat
from .gateway import LLMGateway
from .intake import head_text
from .sandbox import prepare_workdir
from .session import (
    SessionState,
    SessionStatus,
    bind_dataset,
    run_turn,
    start_session,
)


@dataclass
class TurnRecord:
    turn_id: str
    status: str = "running"  # running | done | error
    error: str | None = None
    result: object | None = None


@dataclass
class SessionRecord:
    id: str
    created_at: float
    workdir: Path
    state: SessionState | None = None
    pending_dataset: Path | None = None
    turns: dict[str, TurnRecord] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


class SessionStore:
    def __init__(self):
        self.records: dict[str, SessionRecord] = {}
        self.by_client_token: dict[str, str] = {}
        self.available = True
        self.lock = threading.Lock()

    def create(self, workdir_root: Path, client_token: str | None = None) -> tuple[SessionRecord, bool]:
        with self.lock:
            if client_token and client_token in self.by_client_token:
                return self.records[self.by_client_token[client_token]], False
            sid = uuid.uuid4().hex[:12]
            record = SessionRecord(
                id=sid, created_at=time.time(), workdir=prepare_workdir(workdir_root / sid)
            )
            self.records[sid] = record
            if client_token:
                self.by_client_token[client_token] = sid
            return record, True

    def get(self, session_id: str) -> SessionRecord:
        record = self.records.get(session_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown session: {session_id}")
        return record


def create_app(
    config: Config | None = None,
    gateway: LLMGateway | None = None,
    benchmark_csv: str | Path | None = None,
) -> FastAPI:
    config = config or DEFAULT_CONFIG
    gateway = gateway or LLMGateway(config=config)
    app = FastAPI(title="lads", version="0.1.0")
    store = SessionStore()
    app.state.store = store
    app.state.config = config
    app.state.gateway = gateway
    app.state.benchmark_csv = Path(benchmark_csv) if benchmark_csv else None

    def _session_status(record: SessionRecord) -> str:
        return record.state.status.value if record.state else SessionStatus.OPEN.value

    @app.post("/api/sessions", status_code=201)
    def create_session(body: dict | None = None):
        if not store.available:
            raise HTTPException(status_code=503, detail="session store unavailable")
        token = (body or {}).get("client_token")
        record, created = store.create(config.ensure_workdir_root(), client_token=token)
        payload = {"id": record.id, "created_at": record.created_at, "status": _session_status(record)}
        if created:
            return payload
        return payload  # idempotent replay of the same client token

    @app.post("/api/sessions/{session_id}/dataset")
    def upload_dataset(session_id: str, file: UploadFile):
        record = store.get(session_id)
        name = Path(file.filename or "dataset").name
        content = file.file.read(config.upload_limit_bytes + 1)
        if len(content) > config.upload_limit_bytes:
            raise HTTPException(status_code=413, detail="upload exceeds the configured size cap")
        uploads = record.workdir / "uploads"
        uploads.mkdir(exist_ok=True)
        saved = uploads / name
        saved.write_bytes(content)
        try:
            if record.state is not None:
                table = bind_dataset(record.state, saved, config=config)
            else:
                from .intake import load

                table = load(saved, config=config)
                record.pending_dataset = saved
        except UnsupportedFormat as exc:
            raise HTTPException(status_code=415, detail=str(exc))
        except LadsError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        preview = table.frame.head(20)
        return {
            "n_rows": table.n_rows,
            "n_cols": table.n_cols,
            "format": table.format.value,
            "columns": [
                {"name": c.name, "kind": c.inferred_kind.value, "null_fraction": c.null_fraction}
                for c in table.columns
            ],
            "preview_rows": json.loads(preview.to_json(orient="records")),
            "head_text": head_text(table, 5, config=config),
        }

    @app.post("/api/sessions/{session_id}/messages", status_code=202)
    def post_message(session_id: str, body: dict):
        record = store.get(session_id)
        text = (body or {}).get("text", "")
        if not isinstance(text, str) or not text.strip():
            raise HTTPException(status_code=400, detail="message text must be non-empty")
        client_turn_id = (body or {}).get("turn_id")
        with record.lock:
            if client_turn_id and client_turn_id in record.turns:
                return {"turn_id": client_turn_id, "status": record.turns[client_turn_id].status}
            if record.state is not None and record.state.status is SessionStatus.RUNNING:
                raise HTTPException(status_code=409, detail="a turn is already running")
            if record.state is None:
                record.state = start_session(
                    text, dataset_path=None, config=config, gateway=None
                )
                # adopt the API session's id and workdir
                record.state.session_id = record.id
                _move_session_dirs(record)
                if record.pending_dataset is not None:
                    bind_dataset(record.state, record.pending_dataset, config=config)
            else:
                from .session import Role

                record.state.append(Role.USER, text)
            turn_id = client_turn_id or uuid.uuid4().hex[:12]
            turn = TurnRecord(turn_id=turn_id)
            record.turns[turn_id] = turn

        def _run():
            try:
                turn.result = run_turn(gateway, record.state, config=config)
                turn.status = "done"
            except Exception as exc:
                turn.status = "error"
                turn.error = str(exc)

        threading.Thread(target=_run, daemon=True).start()
        return {"turn_id": turn_id, "status": "running"}

    def _move_session_dirs(record: SessionRecord) -> None:
        # start_session made its own workdir; point the state at the API record's
        state = record.state
        state.workdir = record.workdir
        if state.events is not None:
            state.events.path = record.workdir / "events.ndjson"

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        record = store.get(session_id)
        return {
            "id": record.id,
            "created_at": record.created_at,
            "status": _session_status(record),
            "n_messages": len(record.state.messages) if record.state else 0,
            "dataset_bound": bool(
                (record.state and record.state.dataset) or record.pending_dataset
            ),
            "turns": {tid: t.status for tid, t in record.turns.items()},
        }

    @app.get("/api/sessions/{session_id}/events")
    def stream_events(session_id: str, poll: float = 0.1):
        record = store.get(session_id)

        def generator():
            sent = 0
            while True:
                events = record.state.events.events if record.state and record.state.events else []
                while sent < len(events):
                    yield f"data: {json.dumps(events[sent].to_json())}\n\n"
                    sent += 1
                running = record.state is not None and record.state.status is SessionStatus.RUNNING
                if not running:
                    any_pending = any(t.status == "running" for t in record.turns.values())
                    if not any_pending:
                        yield 'event: end\ndata: {"done": true}\n\n'
                        return
                time.sleep(poll)

        return StreamingResponse(generator(), media_type="text/event-stream")

    @app.get("/api/sessions/{session_id}/artifacts")
    def get_artifacts(session_id: str):
        record = store.get(session_id)
        state = record.state
        if state is None or not state.artifacts:
            return {"code": None, "report": None, "predictions": None, "inference": None}
        pipeline = state.artifacts[-1]
        inference_dir = pipeline.workdir.parent / "inference"
        return {
            "code": pipeline.artifact.code,
            "report": pipeline.report,
            "predictions": str(pipeline.predictions_path) if pipeline.predictions_path else None,
            "inference": str(inference_dir) if inference_dir.exists() else None,
            "metrics": pipeline.metrics,
            "verdict": pipeline.verdict.status.value,
            "validated": pipeline.validated,
        }

    @app.get("/api/sessions/{session_id}/artifacts/code")
    def download_code(session_id: str):
        record = store.get(session_id)
        if not (record.state and record.state.artifacts):
            raise HTTPException(status_code=404, detail="no code artifact yet")
        return PlainTextResponse(record.state.artifacts[-1].artifact.code)

    @app.get("/api/sessions/{session_id}/artifacts/report")
    def download_report(session_id: str):
        record = store.get(session_id)
        if not (record.state and record.state.artifacts and record.state.artifacts[-1].report):
            raise HTTPException(status_code=404, detail="no report yet")
        return PlainTextResponse(record.state.artifacts[-1].report, media_type="text/markdown")

    @app.get("/api/sessions/{session_id}/artifacts/predictions")
    def download_predictions(session_id: str):
        record = store.get(session_id)
        if not (record.state and record.state.artifacts):
            raise HTTPException(status_code=404, detail="no predictions yet")
        path = record.state.artifacts[-1].predictions_path
        if not path or not Path(path).exists():
            raise HTTPException(status_code=404, detail="no predictions yet")
        return FileResponse(path, media_type="text/csv", filename=Path(path).name)

    @app.get("/api/benchmark")
    def get_benchmark():
        path = app.state.benchmark_csv
        if path is None or not Path(path).exists():
            return {"rows": []}
        rows = read_rows(path)
        return {
            "rows": [
                {
                    "dataset": r.dataset,
                    "tool": r.tool,
                    "metric_name": r.metric_name,
                    "raw_score": r.raw_score,
                    "nps": r.nps,
                    "timestamp": r.timestamp,
                }
                for r in rows
            ]
        }

    ui_dir = Path(__file__).resolve().parent.parent.parent / "frontend"
    if (ui_dir / "index.html").exists() and (ui_dir / "dist").exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
