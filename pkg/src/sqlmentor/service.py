"""HTTP session service: a live human replaces the proxy expert.

Each session runs the online loop in a worker thread; the human adapter blocks
the loop until feedback or approval arrives over HTTP. Candidate previews come
from read-only execution; no response payload ever includes the gold SQL.
"""

from __future__ import annotations

import itertools
import json
import queue
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from ._util import LogicalClock
from .agent import SOLVED, AgentConfig, SkipRequested, run_online
from .corpus import Corpus, TaskInstance
from .distill import distill_trajectory
from .embedding import HashEmbedder
from .hpa import FeedbackDecision
from .llm import ChatGateway, ChatTurn
from .memory import MemoryKind, MemoryStoreSet
from .sqlexec import execute, score

PREVIEW_ROW_CAP = 50
HUMAN_TIMEOUT_S = 30 * 60.0

STATE_IDLE = "Idle"
STATE_AGENT_WORKING = "AgentWorking"
STATE_AWAITING_HUMAN = "AwaitingHuman"
STATE_COMPLETED = "Completed"

HUMAN_OVERRIDE_FLAG = "human-override"
HUMAN_CONFIRMATION = "Confirmed correct by the human expert."


class CreateSessionRequest(BaseModel):
    db_id: str
    task_ids: list[str]
    agent_label: str = "P-3"


class FeedbackRequest(BaseModel):
    text: str


@dataclass
class CandidateView:
    nlq: str
    schema_text: str
    candidate_sql: str
    execution_status: str
    preview_rows: list[list]
    row_count: int
    truncated: bool
    round_number: int
    budget_remaining: int

    def to_dict(self) -> dict:
        return {
            "nlq": self.nlq,
            "schema_text": self.schema_text,
            "candidate_sql": self.candidate_sql,
            "execution_status": self.execution_status,
            "preview_rows": self.preview_rows,
            "row_count": self.row_count,
            "truncated": self.truncated,
            "round_number": self.round_number,
            "budget_remaining": self.budget_remaining,
        }


@dataclass
class Session:
    session_id: str
    db_id: str
    tasks: list[TaskInstance]
    config: AgentConfig
    state: str = STATE_IDLE
    pending: CandidateView | None = None
    transcript: list[dict] = field(default_factory=list)
    results: list[dict] = field(default_factory=list)
    paused: bool = False
    error: str | None = None
    current_task_index: int = 0
    decisions: "queue.Queue[tuple[str, str]]" = field(default_factory=queue.Queue)
    lock: threading.Lock = field(default_factory=threading.Lock)
    changed: threading.Condition = field(default_factory=threading.Condition)

    def notify(self) -> None:
        with self.changed:
            self.changed.notify_all()

    def add_event(self, record: dict) -> None:
        with self.lock:
            self.transcript.append(record)
        self.notify()

    def set_state(self, state: str) -> None:
        with self.lock:
            self.state = state
        self.notify()

    def view(self) -> dict:
        with self.lock:
            return {
                "session_id": self.session_id,
                "db_id": self.db_id,
                "agent_label": self.config.label,
                "state": self.state,
                "paused": self.paused,
                "task_ids": [t.task_id for t in self.tasks],
                "current_task_index": self.current_task_index,
                "pending": self.pending.to_dict() if self.pending else None,
                "transcript": list(self.transcript),
                "results": list(self.results),
                "error": self.error,
            }


class _HumanAdapter:
    """FeedbackSource driven by HTTP calls instead of a proxy model."""

    def __init__(self, session: Session, context: "ServiceContext"):
        self.session = session
        self.context = context
        self.round_number = 0  # review requests for the current task

    def review(
        self, candidate_sql: str, task: TaskInstance, transcript: list[ChatTurn]
    ) -> FeedbackDecision:
        catalog = self.context.corpus.catalogs[task.db_id]
        outcome = execute(catalog, candidate_sql)
        self.round_number += 1
        preview = CandidateView(
            nlq=task.nlq,
            schema_text=catalog.schema_text[:4000],
            candidate_sql=candidate_sql,
            execution_status=outcome.status,
            preview_rows=[list(r) for r in (outcome.rows or [])[:PREVIEW_ROW_CAP]],
            row_count=len(outcome.rows or []),
            truncated=outcome.truncated,
            round_number=self.round_number,
            # each earlier review in this task must have produced corrective feedback
            budget_remaining=self.session.config.max_feedback_steps - (self.round_number - 1),
        )
        with self.session.lock:
            self.session.pending = preview
        self.session.set_state(STATE_AWAITING_HUMAN)
        kind, text = self._wait_for_decision()
        with self.session.lock:
            self.session.pending = None
            self.session.paused = False
        self.session.set_state(STATE_AGENT_WORKING)
        if kind == "skip":
            raise SkipRequested()
        if kind == "approve":
            audit = score(catalog, task, candidate_sql)
            entry = {
                "task_id": task.task_id,
                "candidate_sql": candidate_sql,
                "human_verdict": "approved",
                "comparator_z": audit.z,
                "flags": [HUMAN_OVERRIDE_FLAG] if audit.z != 1 else [],
            }
            with self.session.lock:
                self.session.results.append(entry)
            self.session.notify()
            return FeedbackDecision(correct=True, text=HUMAN_CONFIRMATION)
        return FeedbackDecision(correct=False, text=text)

    def _wait_for_decision(self) -> tuple[str, str]:
        waited = 0.0
        while True:
            try:
                return self.session.decisions.get(timeout=1.0)
            except queue.Empty:
                waited += 1.0
                if waited >= self.context.human_timeout_s and not self.session.paused:
                    with self.session.lock:
                        self.session.paused = True
                    self.session.notify()


class ServiceContext:
    """Shared state behind the HTTP app: corpus, stores, backend factory."""

    def __init__(
        self,
        corpus: Corpus,
        gateway_factory,
        memory_dir: str | Path | None = None,
        human_timeout_s: float = HUMAN_TIMEOUT_S,
        embedder=None,
    ):
        self.corpus = corpus
        self.gateway_factory = gateway_factory
        self.memory_dir = Path(memory_dir) if memory_dir else None
        self.human_timeout_s = human_timeout_s
        self.embedder = embedder or HashEmbedder()
        self.sessions: dict[str, Session] = {}
        self._counter = itertools.count(1)
        self._registry_lock = threading.Lock()
        self._db_locks: dict[str, threading.Lock] = {}
        self._storesets: dict[tuple[str, int], MemoryStoreSet] = {}

    def db_lock(self, db_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._db_locks.setdefault(db_id, threading.Lock())

    def storeset(self, db_id: str, level: int) -> MemoryStoreSet:
        with self._registry_lock:
            key = (db_id, level)
            if key not in self._storesets:
                directory = self.memory_dir / db_id if self.memory_dir else None
                self._storesets[key] = MemoryStoreSet(
                    db_id=db_id,
                    level=level,
                    embedder=self.embedder,
                    directory=directory,
                    clock=LogicalClock(),
                )
            return self._storesets[key]

    def new_session_id(self) -> str:
        return f"session-{next(self._counter):04d}"


def _session_worker(context: ServiceContext, session: Session) -> None:
    db_lock = context.db_lock(session.db_id)
    with db_lock:  # one writable store per database across sessions
        session.set_state(STATE_AGENT_WORKING)
        catalog = context.corpus.catalogs[session.db_id]
        storeset = context.storeset(session.db_id, session.config.memory_level)
        gateway = context.gateway_factory()
        adapter = _HumanAdapter(session, context)
        try:
            for index, task in enumerate(session.tasks):
                with session.lock:
                    session.current_task_index = index
                adapter.round_number = 0
                trajectory = run_online(
                    task,
                    session.config,
                    storeset,
                    gateway,
                    catalog,
                    adapter,
                    event_sink=lambda turn: session.add_event(turn.to_record()),
                )
                if trajectory.outcome == SOLVED:
                    distill_trajectory(
                        trajectory,
                        task,
                        session.config,
                        catalog,
                        gateway,
                        storeset,
                        run_id=session.session_id,
                    )
                session.add_event(
                    {
                        "role": "trailer",
                        "content": json.dumps(trajectory.trailer()),
                        "task_id": task.task_id,
                    }
                )
        except Exception as exc:  # noqa: BLE001 - surfaced in the session view
            with session.lock:
                session.error = str(exc)
        finally:
            session.set_state(STATE_COMPLETED)


def create_app(context: ServiceContext, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(
        title="sqlmentor feedback service",
        version="1.0.0",
        description="Human-in-the-loop feedback sessions for the SQL learning agent.",
    )

    def _get_session(session_id: str) -> Session:
        session = context.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session '{session_id}'")
        return session

    @app.post("/sessions", status_code=201)
    def create_session(request: CreateSessionRequest) -> dict:
        if request.db_id not in context.corpus.catalogs:
            raise HTTPException(status_code=404, detail=f"unknown database '{request.db_id}'")
        by_id = {t.task_id: t for t in context.corpus.tasks_for(request.db_id)}
        tasks = []
        for task_id in request.task_ids:
            if task_id not in by_id:
                raise HTTPException(status_code=404, detail=f"unknown task id '{task_id}'")
            tasks.append(by_id[task_id])
        if not tasks:
            raise HTTPException(status_code=422, detail="task_ids must be non-empty")
        try:
            config = AgentConfig.from_label(request.agent_label)
        except Exception as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        session = Session(
            session_id=context.new_session_id(),
            db_id=request.db_id,
            tasks=tasks,
            config=config,
        )
        context.sessions[session.session_id] = session
        worker = threading.Thread(
            target=_session_worker, args=(context, session), daemon=True
        )
        worker.start()
        return {"session_id": session.session_id, "state": session.state}

    @app.get("/sessions")
    def list_sessions() -> list[dict]:
        return [
            {"session_id": s.session_id, "db_id": s.db_id, "state": s.state}
            for s in context.sessions.values()
        ]

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return _get_session(session_id).view()

    @app.post("/sessions/{session_id}/feedback", status_code=202)
    def submit_feedback(session_id: str, request: FeedbackRequest) -> dict:
        session = _get_session(session_id)
        if not request.text.strip():
            raise HTTPException(status_code=422, detail="feedback text must be non-empty")
        with session.lock:
            if session.state != STATE_AWAITING_HUMAN:
                raise HTTPException(
                    status_code=409, detail=f"session is {session.state}, not AwaitingHuman"
                )
            session.state = STATE_AGENT_WORKING
        session.notify()
        session.decisions.put(("feedback", request.text))
        return {"accepted": True}

    @app.post("/sessions/{session_id}/approve", status_code=202)
    def approve(session_id: str) -> dict:
        session = _get_session(session_id)
        with session.lock:
            if session.state != STATE_AWAITING_HUMAN:
                raise HTTPException(
                    status_code=409, detail=f"session is {session.state}, not AwaitingHuman"
                )
            session.state = STATE_AGENT_WORKING
        session.notify()
        session.decisions.put(("approve", ""))
        return {"accepted": True}

    @app.post("/sessions/{session_id}/skip", status_code=202)
    def skip(session_id: str) -> dict:
        session = _get_session(session_id)
        with session.lock:
            if session.state != STATE_AWAITING_HUMAN:
                raise HTTPException(
                    status_code=409, detail=f"session is {session.state}, not AwaitingHuman"
                )
        session.decisions.put(("skip", ""))
        return {"accepted": True}

    @app.get("/sessions/{session_id}/events")
    def stream_events(session_id: str, after: int = 0) -> StreamingResponse:
        session = _get_session(session_id)

        def event_stream():
            cursor = after
            while True:
                with session.lock:
                    events = session.transcript[cursor:]
                    state = session.state
                for event in events:
                    payload = json.dumps(event, ensure_ascii=False)
                    yield f"id: {cursor}\ndata: {payload}\n\n"
                    cursor += 1
                if state == STATE_COMPLETED and cursor >= len(session.transcript):
                    yield "event: end\ndata: {}\n\n"
                    return
                with session.changed:
                    session.changed.wait(timeout=0.5)

        return StreamingResponse(event_stream(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/memory")
    def list_memory(session_id: str) -> dict:
        session = _get_session(session_id)
        storeset = context.storeset(session.db_id, session.config.memory_level)
        return {
            kind.value: [
                {
                    "key": record.key,
                    "body": record.body,
                    "provenance": {
                        "run_id": record.provenance.run_id,
                        "task_id": record.provenance.task_id,
                        "created_at": record.provenance.created_at,
                    },
                }
                for record in storeset.stores[kind]
            ]
            for kind in MemoryKind
        }

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
