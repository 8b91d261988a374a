"""HTTP service for LAN sessions: CRUD, execution, training supervision.

Requests for one session are serialized: manual edits are rejected with 409
while a pipeline step (or a run) is computing, and pipeline steps execute on
a per-session worker thread. State changes stream out over server-sent
events so the console never polls.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .gateway import AbortedError, CancelToken, GatewayError, backend_from_env
from .model import (
    Agent,
    ControlModule,
    ExecutionModule,
    KnowledgeItem,
    Lan,
    LanStructureError,
    ParseError,
    add_agent,
    add_edge,
    lan_from_doc,
    lan_to_doc,
    remove_agent,
    remove_edge,
    replace_agent,
    validate_lan,
)
from .runtime import ExecutionAborted, FormatError, run_lan, trace_to_doc
from .store import (
    ENV_DATA_DIR,
    RevisionCoalescer,
    SessionStore,
    StorageError,
    new_session_id,
)
from .update import (
    STATUS_ABORTED,
    STATUS_AWAITING,
    STATUS_COMPUTING,
    Intervention,
    IterationCapReached,
    MergeError,
    PlanValidationError,
    RejectedStepError,
    TrainingExample,
    TrainingSession,
    UnknownReasonType,
    UpdatePipeline,
    ValidationError,
    _STEP_FIELDS,
    pipeline_state_from_doc,
    utc_now,
)

logger = logging.getLogger(__name__)

API_VERSION = 1
ENV_BIND_ADDR = "LANFORGE_BIND_ADDR"
ENV_CONSOLE_DIR = "LANFORGE_CONSOLE_DIR"
EVENTS_KEEPALIVE_SECONDS = 15.0

_STEP_ERRORS = (
    FormatError,
    PlanValidationError,
    RejectedStepError,
    UnknownReasonType,
    MergeError,
    ValidationError,
)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, violations=None):
        self.status = status
        self.code = code
        self.message = message
        self.violations = violations or []
        super().__init__(message)

    def response(self) -> JSONResponse:
        return JSONResponse(
            status_code=self.status,
            content={
                "api_version": API_VERSION,
                "code": self.code,
                "message": self.message,
                "violations": self.violations,
            },
        )


# --- request bodies ----------------------------------------------------------


class CreateSessionBody(BaseModel):
    task_description: str
    input_description: str = ""
    output_description: str = ""


class AgentBody(BaseModel):
    name: str
    subtask_description: str
    output_description: str
    enabled: bool = True


class PatchAgentBody(BaseModel):
    name: str | None = None
    subtask_description: str | None = None
    output_description: str | None = None
    enabled: bool | None = None
    required_predecessors: list[str] | None = None
    cm_knowledge: list[str | dict] | None = None
    em_knowledge: list[str | dict] | None = None


class EdgeBody(BaseModel):
    source: str
    target: str


class RunBody(BaseModel):
    input: str


class ExampleBody(BaseModel):
    input: str
    ground_truth: str
    id: str | None = None


class StartPipelineBody(BaseModel):
    example_id: str
    policy: str = "interactive"


class RetryBody(BaseModel):
    edited_document: dict | None = None
    hint_text: str | None = None


# --- per-session runtime -------------------------------------------------------


@dataclass
class SessionRuntime:
    stored: object
    training: TrainingSession
    lock: threading.RLock = field(default_factory=threading.RLock)
    computing: bool = False
    pipeline: UpdatePipeline | None = None
    policy: str = "interactive"
    cancel: CancelToken | None = None
    coalescer: RevisionCoalescer | None = None
    subscribers: list = field(default_factory=list)
    event_log: list = field(default_factory=list)

    @property
    def pipeline_active(self) -> bool:
        return self.pipeline is not None and self.pipeline.state.status in (
            STATUS_AWAITING,
            STATUS_COMPUTING,
        )


class ServiceState:
    def __init__(self, store: SessionStore, backend_factory, clock):
        self.store = store
        self.backend_factory = backend_factory
        self.clock = clock
        self.runtimes: dict[str, SessionRuntime] = {}
        self.lock = threading.Lock()


def _emit(rt: SessionRuntime, event_type: str, data: dict) -> None:
    event = {"seq": len(rt.event_log) + 1, "type": event_type, "data": data}
    rt.event_log.append(event)
    for subscriber in list(rt.subscribers):
        subscriber.put(event)


def _pipeline_doc(rt: SessionRuntime, include_trace: bool) -> dict:
    doc = rt.pipeline.state.to_doc(include_trace=include_trace)
    # while a worker computes, the machine still holds the previous status
    if rt.computing and doc["status"] not in ("satisfied", "aborted"):
        doc["status"] = STATUS_COMPUTING
    return doc


def _emit_pipeline(rt: SessionRuntime) -> None:
    _emit(rt, "pipeline", _pipeline_doc(rt, include_trace=False))


def _persist(state: ServiceState, rt: SessionRuntime) -> None:
    stored = rt.stored
    # traces recorded for newly satisfied examples become history files
    while len(stored.history) < len(rt.training.history):
        example, trace = rt.training.history[len(stored.history)]
        ref = state.store.save_trace(stored, trace)
        stored.history.append((example, ref))
    stored.pipeline_doc = (
        rt.pipeline.state.to_doc(include_trace=True) if rt.pipeline else None
    )
    state.store.save_meta(stored)


def _runtime(state: ServiceState, session_id: str) -> SessionRuntime:
    with state.lock:
        rt = state.runtimes.get(session_id)
        if rt is not None:
            return rt
        if not state.store.exists(session_id):
            raise ApiError(404, "no_such_session", f"unknown session {session_id!r}")
        stored = state.store.load(session_id)
        lan = state.store.latest_lan(stored)
        training = TrainingSession(
            lan=lan,
            backend=None,
            history=state.store.load_history(stored),
            clock=state.clock,
        )
        rt = SessionRuntime(stored=stored, training=training)
        training.on_revision = _revision_callback(state, rt)
        if stored.pipeline_doc:
            pipeline_state = pipeline_state_from_doc(stored.pipeline_doc)
            if pipeline_state.status == STATUS_COMPUTING:
                # a step was interrupted by a restart; pause for supervision
                pipeline_state.status = STATUS_AWAITING
                pipeline_state.error = "step interrupted by a service restart"
            pipeline = UpdatePipeline(training, pipeline_state.example)
            pipeline.state = pipeline_state
            rt.pipeline = pipeline
        state.runtimes[session_id] = rt
        return rt


def _revision_callback(state: ServiceState, rt: SessionRuntime):
    def on_append(revision: int, cause: str):
        _emit(rt, "revision", {"revision": revision, "cause": cause})

    rt.coalescer = RevisionCoalescer(state.store, rt.stored, on_append=on_append)

    def on_revision(lan: Lan, cause: str):
        with rt.lock:
            rt.coalescer(lan, cause)

    return on_revision


def _spawn_pipeline_work(state: ServiceState, rt: SessionRuntime, action) -> None:
    """Run one pipeline action on a worker thread; the session stays marked
    as computing until it lands."""
    rt.computing = True
    _emit_pipeline(rt)

    def work():
        pipeline = rt.pipeline
        if rt.coalescer is not None:
            rt.coalescer.begin_action()
        try:
            action()
        except _STEP_ERRORS as exc:
            pipeline.state.error = str(exc)
            if rt.policy == "interactive":
                pipeline.state.status = STATUS_AWAITING
            else:
                pipeline.state.status = STATUS_ABORTED
        except IterationCapReached as exc:
            pipeline.state.error = str(exc)
            pipeline.state.status = STATUS_ABORTED
        except (ExecutionAborted, AbortedError) as exc:
            pipeline.state.error = str(exc)
            pipeline.state.status = STATUS_ABORTED
        except GatewayError as exc:
            pipeline.state.error = str(exc)
            if rt.policy == "interactive":
                pipeline.state.status = STATUS_AWAITING
            else:
                pipeline.state.status = STATUS_ABORTED
        except Exception as exc:  # noqa: BLE001 - fail the pipeline, not the service
            logger.exception("pipeline action failed")
            pipeline.state.error = str(exc)
            pipeline.state.status = STATUS_ABORTED
        finally:
            with rt.lock:
                rt.computing = False
                _persist(state, rt)
            _emit_pipeline(rt)

    threading.Thread(target=work, daemon=True, name="lanforge-pipeline").start()


def _auto_confirm_loop(rt: SessionRuntime):
    rt.pipeline.start()
    while rt.pipeline.state.status == STATUS_AWAITING:
        _emit_pipeline(rt)
        rt.pipeline.confirm()


# --- app factory ----------------------------------------------------------------


def create_app(
    store: SessionStore | None = None,
    *,
    backend_factory=None,
    clock=None,
    console_dir: str | None = None,
) -> FastAPI:
    if store is None:
        store = SessionStore(os.environ.get(ENV_DATA_DIR, "./lanforge-data"))
    if backend_factory is None:
        backend_factory = lambda cancel: backend_from_env(cancel=cancel)  # noqa: E731
    state = ServiceState(store, backend_factory, clock or utc_now)

    app = FastAPI(title="lanforge", version="0.1.0")
    app.state.service = state

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return exc.response()

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        return ApiError(
            422,
            "invalid_body",
            "request body failed validation",
            [{"rule": "body", "detail": str(e["msg"]), "loc": list(e["loc"])} for e in exc.errors()],
        ).response()

    @app.exception_handler(StorageError)
    async def handle_storage_error(request: Request, exc: StorageError):
        return ApiError(500, "storage_error", str(exc)).response()

    def _backend(rt: SessionRuntime):
        rt.cancel = CancelToken()
        try:
            rt.training.backend = state.backend_factory(rt.cancel)
        except GatewayError as exc:
            raise ApiError(503, "config_error", str(exc))
        return rt.training.backend

    def _manual_edit(rt: SessionRuntime, mutate) -> dict:
        with rt.lock:
            if rt.computing:
                raise ApiError(
                    409, "computing", "a pipeline step or run is computing"
                )
            try:
                new_lan = mutate(rt.training.lan)
            except LanStructureError as exc:
                raise ApiError(422, "invalid_lan", str(exc))
            violations = validate_lan(new_lan)
            if violations:
                raise ApiError(
                    422,
                    "invalid_lan",
                    "the edited network cannot be saved",
                    [v.to_dict() for v in violations],
                )
            # persist before committing to memory so a storage failure
            # leaves the session on the previous revision
            revision = state.store.append_revision(rt.stored, new_lan, "manual_edit")
            rt.training.lan = new_lan
            _emit(rt, "revision", {"revision": revision, "cause": "manual_edit"})
            _persist(state, rt)
            # an edit invalidates a paused step: recompute the iteration
            if rt.pipeline is not None and rt.pipeline.state.status == STATUS_AWAITING:
                _spawn_pipeline_work(state, rt, rt.pipeline.restart_iteration)
        return {
            "api_version": API_VERSION,
            "revision": revision,
            "lan": lan_to_doc(new_lan),
        }

    # -- sessions

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        from .update import init_lan

        try:
            lan = init_lan(
                body.task_description, body.input_description, body.output_description
            )
        except ValidationError as exc:
            raise ApiError(422, "invalid_session", str(exc))
        session_id = new_session_id()
        stored = state.store.create(session_id, lan, created_at=state.clock())
        training = TrainingSession(lan=lan, backend=None, clock=state.clock)
        rt = SessionRuntime(stored=stored, training=training)
        training.on_revision = _revision_callback(state, rt)
        with state.lock:
            state.runtimes[session_id] = rt
        return {
            "api_version": API_VERSION,
            "session": {"id": session_id, "created_at": stored.created_at},
            "lan": lan_to_doc(lan),
        }

    @app.get("/sessions")
    def list_sessions():
        return {"api_version": API_VERSION, "sessions": state.store.list_sessions()}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        rt = _runtime(state, session_id)
        return {
            "api_version": API_VERSION,
            "session": {
                "id": rt.stored.id,
                "created_at": rt.stored.created_at,
                "revisions": len(rt.stored.revisions),
                "queue": [
                    {"id": e.id, "input": e.input, "ground_truth": e.ground_truth}
                    for e in rt.stored.queue
                ],
                "pipeline_active": rt.pipeline_active,
                "warnings": rt.stored.warnings,
            },
        }

    # -- LAN read/replace and element edits

    @app.get("/sessions/{session_id}/lan")
    def get_lan(session_id: str):
        rt = _runtime(state, session_id)
        return {
            "api_version": API_VERSION,
            "revision": rt.stored.revisions[-1].revision,
            "lan": lan_to_doc(rt.training.lan),
        }

    @app.put("/sessions/{session_id}/lan")
    def put_lan(session_id: str, body: dict):
        rt = _runtime(state, session_id)
        doc = body.get("lan", body)

        def mutate(_current: Lan) -> Lan:
            try:
                return lan_from_doc(doc)
            except ParseError as exc:
                raise ApiError(422, "parse_error", str(exc))

        return _manual_edit(rt, mutate)

    @app.post("/sessions/{session_id}/lan/agents", status_code=201)
    def post_agent(session_id: str, body: AgentBody):
        rt = _runtime(state, session_id)

        def mutate(current: Lan) -> Lan:
            if any(a.name == body.name for a in current.agents):
                raise ApiError(
                    422,
                    "invalid_lan",
                    f"agent {body.name!r} already exists",
                    [{"rule": "duplicate_name", "name": body.name}],
                )
            agent = Agent(
                name=body.name,
                control=ControlModule(enabled=body.enabled),
                execution=ExecutionModule(
                    subtask_description=body.subtask_description,
                    output_description=body.output_description,
                ),
            )
            return add_agent(current, agent)

        return _manual_edit(rt, mutate)

    @app.delete("/sessions/{session_id}/lan/agents/{agent_name}")
    def delete_agent(session_id: str, agent_name: str):
        rt = _runtime(state, session_id)

        def mutate(current: Lan) -> Lan:
            if not any(a.name == agent_name for a in current.agents):
                raise ApiError(404, "no_such_agent", f"unknown agent {agent_name!r}")
            return remove_agent(current, agent_name)

        return _manual_edit(rt, mutate)

    def _knowledge_list(items, clock) -> list[KnowledgeItem]:
        out = []
        for item in items:
            if isinstance(item, str):
                out.append(KnowledgeItem(item, origin="user", created_at=clock()))
            else:
                out.append(
                    KnowledgeItem(
                        item["text"],
                        origin=item.get("origin", "user"),
                        created_at=item.get("created_at") or clock(),
                    )
                )
        return out

    @app.patch("/sessions/{session_id}/lan/agents/{agent_name}")
    def patch_agent(session_id: str, agent_name: str, body: PatchAgentBody):
        rt = _runtime(state, session_id)

        def mutate(current: Lan) -> Lan:
            try:
                agent = current.agent(agent_name)
            except KeyError:
                raise ApiError(404, "no_such_agent", f"unknown agent {agent_name!r}")
            control = agent.control
            execution = agent.execution
            if body.enabled is not None or body.required_predecessors is not None or body.cm_knowledge is not None:
                control = ControlModule(
                    enabled=body.enabled if body.enabled is not None else control.enabled,
                    required_predecessors=(
                        body.required_predecessors
                        if body.required_predecessors is not None
                        else list(control.required_predecessors)
                    ),
                    knowledge=(
                        _knowledge_list(body.cm_knowledge, state.clock)
                        if body.cm_knowledge is not None
                        else list(control.knowledge)
                    ),
                    examples=list(control.examples),
                )
            if body.subtask_description is not None or body.output_description is not None or body.em_knowledge is not None:
                execution = ExecutionModule(
                    subtask_description=(
                        body.subtask_description
                        if body.subtask_description is not None
                        else execution.subtask_description
                    ),
                    output_description=(
                        body.output_description
                        if body.output_description is not None
                        else execution.output_description
                    ),
                    knowledge=(
                        _knowledge_list(body.em_knowledge, state.clock)
                        if body.em_knowledge is not None
                        else list(execution.knowledge)
                    ),
                    examples=list(execution.examples),
                )
            updated = Agent(
                name=body.name if body.name is not None else agent.name,
                control=control,
                execution=execution,
            )
            return replace_agent(current, agent_name, updated)

        return _manual_edit(rt, mutate)

    @app.post("/sessions/{session_id}/lan/edges", status_code=201)
    def post_edge(session_id: str, body: EdgeBody):
        rt = _runtime(state, session_id)

        def mutate(current: Lan) -> Lan:
            return add_edge(current, body.source, body.target)

        return _manual_edit(rt, mutate)

    @app.delete("/sessions/{session_id}/lan/edges")
    def delete_edge(session_id: str, source: str, target: str):
        rt = _runtime(state, session_id)

        def mutate(current: Lan) -> Lan:
            if (source, target) not in current.edges:
                raise ApiError(
                    404, "no_such_edge", f"no edge {source!r} -> {target!r}"
                )
            return remove_edge(current, source, target)

        return _manual_edit(rt, mutate)

    # -- execution

    @app.post("/sessions/{session_id}/run")
    def post_run(session_id: str, body: RunBody):
        rt = _runtime(state, session_id)
        with rt.lock:
            if rt.computing:
                raise ApiError(409, "computing", "a pipeline step or run is computing")
            rt.computing = True
            backend = _backend(rt)
        try:
            trace = run_lan(rt.training.lan, body.input, backend)
        except ExecutionAborted:
            raise ApiError(409, "aborted", "run cancelled")
        except FormatError as exc:
            raise ApiError(502, "format_error", str(exc))
        except GatewayError as exc:
            raise ApiError(502, "gateway_error", str(exc))
        finally:
            with rt.lock:
                rt.computing = False
        with rt.lock:
            ref = state.store.save_trace(rt.stored, trace)
            state.store.save_meta(rt.stored)
        _emit(rt, "run", {"trace_file": ref, "final_output": trace.final_output})
        return {
            "api_version": API_VERSION,
            "trace": trace_to_doc(trace),
            "trace_file": ref,
        }

    # -- training queue and pipeline

    @app.post("/sessions/{session_id}/examples", status_code=201)
    def post_example(session_id: str, body: ExampleBody):
        rt = _runtime(state, session_id)
        with rt.lock:
            example_id = body.id or f"ex-{len(rt.stored.queue) + 1:03d}"
            if any(e.id == example_id for e in rt.stored.queue):
                raise ApiError(409, "duplicate_example", f"example {example_id!r} exists")
            try:
                example = TrainingExample(
                    id=example_id, input=body.input, ground_truth=body.ground_truth
                )
            except ValidationError as exc:
                raise ApiError(422, "invalid_example", str(exc))
            rt.stored.queue.append(example)
            state.store.save_meta(rt.stored)
        return {
            "api_version": API_VERSION,
            "example": {"id": example.id, "input": example.input, "ground_truth": example.ground_truth},
        }

    @app.post("/sessions/{session_id}/pipeline/start", status_code=202)
    def start_pipeline(session_id: str, body: StartPipelineBody):
        rt = _runtime(state, session_id)
        if body.policy not in ("interactive", "auto_confirm"):
            raise ApiError(422, "invalid_policy", f"unknown policy {body.policy!r}")
        with rt.lock:
            if rt.computing or rt.pipeline_active:
                raise ApiError(409, "pipeline_active", "a pipeline is already active")
            example = next((e for e in rt.stored.queue if e.id == body.example_id), None)
            if example is None:
                raise ApiError(404, "no_such_example", f"unknown example {body.example_id!r}")
            _backend(rt)
            rt.policy = body.policy
            rt.pipeline = UpdatePipeline(rt.training, example)
            if body.policy == "auto_confirm":
                _spawn_pipeline_work(state, rt, lambda: _auto_confirm_loop(rt))
            else:
                _spawn_pipeline_work(state, rt, rt.pipeline.start)
        return {
            "api_version": API_VERSION,
            "pipeline": _pipeline_doc(rt, include_trace=False),
        }

    @app.get("/sessions/{session_id}/pipeline")
    def get_pipeline(session_id: str):
        rt = _runtime(state, session_id)
        if rt.pipeline is None:
            raise ApiError(404, "no_pipeline", "no pipeline has been started")
        return {
            "api_version": API_VERSION,
            "pipeline": _pipeline_doc(rt, include_trace=True),
        }

    @app.post("/sessions/{session_id}/pipeline/confirm", status_code=202)
    def confirm_pipeline(session_id: str):
        rt = _runtime(state, session_id)
        with rt.lock:
            if rt.pipeline is None:
                raise ApiError(404, "no_pipeline", "no pipeline has been started")
            if rt.computing:
                raise ApiError(409, "computing", "a pipeline step is computing")
            if rt.pipeline.state.status != STATUS_AWAITING:
                raise ApiError(
                    409,
                    "not_awaiting",
                    f"nothing awaits confirmation (status={rt.pipeline.state.status})",
                )
            _spawn_pipeline_work(state, rt, rt.pipeline.confirm)
        return {
            "api_version": API_VERSION,
            "pipeline": _pipeline_doc(rt, include_trace=False),
        }

    @app.post("/sessions/{session_id}/pipeline/retry", status_code=202)
    def retry_pipeline(session_id: str, body: RetryBody):
        rt = _runtime(state, session_id)
        with rt.lock:
            if rt.pipeline is None:
                raise ApiError(404, "no_pipeline", "no pipeline has been started")
            if rt.computing:
                raise ApiError(409, "computing", "a pipeline step is computing")
            if rt.pipeline.state.status != STATUS_AWAITING:
                raise ApiError(
                    409,
                    "not_awaiting",
                    f"nothing awaits a retry (status={rt.pipeline.state.status})",
                )
            if body.edited_document is None and not body.hint_text:
                raise ApiError(
                    422,
                    "invalid_intervention",
                    "an intervention needs an edited document, a hint, or both",
                )
            if body.edited_document is not None:
                step = rt.pipeline.state.current_step
                unknown = set(body.edited_document) - _STEP_FIELDS.get(step, set())
                if unknown:
                    raise ApiError(
                        422,
                        "merge_error",
                        f"fields not in the step template: {', '.join(sorted(unknown))}",
                    )
            intervention = Intervention(
                edited_document=body.edited_document, hint_text=body.hint_text
            )
            _spawn_pipeline_work(state, rt, lambda: rt.pipeline.retry(intervention))
        return {
            "api_version": API_VERSION,
            "pipeline": _pipeline_doc(rt, include_trace=False),
        }

    @app.post("/sessions/{session_id}/pipeline/abort")
    def abort_pipeline(session_id: str):
        rt = _runtime(state, session_id)
        with rt.lock:
            if rt.pipeline is None:
                raise ApiError(404, "no_pipeline", "no pipeline has been started")
            if rt.cancel is not None:
                rt.cancel.cancel()
            rt.pipeline.abort()
            _persist(state, rt)
        _emit_pipeline(rt)
        return {
            "api_version": API_VERSION,
            "pipeline": _pipeline_doc(rt, include_trace=False),
        }

    # -- revisions

    @app.get("/sessions/{session_id}/revisions")
    def list_revisions(session_id: str):
        rt = _runtime(state, session_id)
        return {
            "api_version": API_VERSION,
            "revisions": [m.to_doc() for m in rt.stored.revisions],
        }

    @app.get("/sessions/{session_id}/revisions/{revision}")
    def get_revision(session_id: str, revision: int):
        rt = _runtime(state, session_id)
        try:
            meta, lan = state.store.load_revision(session_id, revision)
        except StorageError as exc:
            raise ApiError(404, "no_such_revision", str(exc))
        return {"api_version": API_VERSION, **meta.to_doc(), "lan": lan_to_doc(lan)}

    # -- events

    @app.get("/sessions/{session_id}/events")
    def stream_events(session_id: str, once: bool = False):
        """Server-sent events: the full backlog, then live updates.

        ``once=true`` closes after the backlog, which lets a reconnecting
        client (or a test) replay every state transition so far.
        """
        rt = _runtime(state, session_id)

        def render(event: dict) -> str:
            return (
                f"id: {event['seq']}\n"
                f"event: {event['type']}\n"
                f"data: {json.dumps(event['data'], ensure_ascii=False)}\n\n"
            )

        def generate():
            subscriber: queue.SimpleQueue = queue.SimpleQueue()
            with rt.lock:
                backlog = list(rt.event_log)
                if not once:
                    rt.subscribers.append(subscriber)
            try:
                for event in backlog:
                    yield render(event)
                while not once:
                    try:
                        yield render(subscriber.get(timeout=EVENTS_KEEPALIVE_SECONDS))
                    except queue.Empty:
                        yield ": keep-alive\n\n"
            finally:
                with rt.lock:
                    if subscriber in rt.subscribers:
                        rt.subscribers.remove(subscriber)

        return StreamingResponse(generate(), media_type="text/event-stream")

    console = console_dir or os.environ.get(ENV_CONSOLE_DIR, "")
    if console and os.path.isdir(console):
        app.mount("/console", StaticFiles(directory=console, html=True), name="console")

    return app


def serve(bind_addr: str | None = None, **app_kwargs) -> None:
    """Run the service with uvicorn. ``bind_addr`` is ``host:port``."""
    import uvicorn

    addr = bind_addr or os.environ.get(ENV_BIND_ADDR, "127.0.0.1:8787")
    host, _, port = addr.rpartition(":")
    uvicorn.run(create_app(**app_kwargs), host=host or "127.0.0.1", port=int(port))
