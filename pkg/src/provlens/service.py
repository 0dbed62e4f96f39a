"""HTTP + streaming gateway over the agent stack.

Endpoints exchange plain JSON documents:

* ``POST /api/chat``       {session_id?, message, config_label?} -> agent reply
* ``POST /api/query``      {ir: <doc>} or {text: "<rendered query>"} -> table
* ``GET  /api/schema``     current dataflow schema snapshot
* ``GET/POST /api/guidelines``  list / add (global or per-session)
* ``GET  /api/anomalies``  recent anomaly records, newest first
* ``GET  /api/stats``      buffer/store/ingest counters
* ``WS   /api/stream``     one event document per record: {kind, payload}

Tables are capped at 1,000 rows server-side with an explicit ``truncated``
flag. Sessions are in-memory: each session layers its own user guidelines
over the global set.
"""

from __future__ import annotations

import asyncio
import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .agent import Agent, HTTPBackend, MockBackend, config_from_label
from .anomaly import AnomalyMonitor, AnomalyPolicy
from .context import ContextManager, Guideline
from .hub import Hub
from .query import InvalidQueryError, ResultTable, execute, parse_ir, parse_ir_doc, render_ir, validate
from .records import AgentIdentity
from .store import JsonlStore, Keeper

MAX_ROWS = 1000

STREAM_TOPICS = {"tasks": "task", "anomalies": "anomaly", "agent": "agent"}


@dataclass
class Session:
    session_id: str
    guidelines: list[Guideline] = field(default_factory=list)
    _seq: int = 0

    def add_guideline(self, text: str, origin: str = "user") -> Guideline:
        if not text or not text.strip():
            raise ValueError("guideline text must be non-empty")
        self._seq += 1
        guideline = Guideline(
            id=f"{self.session_id}-g{self._seq:03d}", text=text.strip(),
            origin=origin, added_at=time.time(),
        )
        self.guidelines.append(guideline)
        return guideline


@dataclass
class Runtime:
    """Everything the endpoints need, wired to one hub."""

    hub: Hub
    ctx: ContextManager
    store: JsonlStore | None
    keeper: Keeper | None
    agent: Agent
    monitor: AnomalyMonitor | None
    sessions: dict[str, Session] = field(default_factory=dict)

    def session(self, session_id: str | None) -> Session:
        key = session_id or "default"
        if key not in self.sessions:
            self.sessions[key] = Session(session_id=key)
        return self.sessions[key]

    def shutdown(self) -> None:
        if self.monitor:
            self.monitor.stop()
        self.ctx.detach()
        if self.keeper:
            self.keeper.stop()
        if self.store:
            self.store.close()
        self.hub.shutdown()


def build_runtime(
    store_dir: str | None = None,
    buffer_capacity: int = 10_000,
    llm_backend: str = "mock",
    anomaly: bool = True,
    anomaly_policy: AnomalyPolicy | None = None,
) -> Runtime:
    hub = Hub()
    ctx = ContextManager(capacity=buffer_capacity)
    ctx.attach(hub, topics=("tasks", "anomalies"))
    store = keeper = None
    if store_dir:
        store = JsonlStore(store_dir)
        keeper = Keeper(hub, store).start()
    backend = MockBackend() if llm_backend == "mock" else HTTPBackend.from_env()
    agent = Agent(
        ctx, backend, hub=hub, store=store,
        identity=AgentIdentity("provenance-agent", "provenance agent"),
    )
    monitor = None
    if anomaly:
        monitor = AnomalyMonitor(
            ctx, hub, anomaly_policy or AnomalyPolicy(period_ms=500)
        ).start()
    return Runtime(hub=hub, ctx=ctx, store=store, keeper=keeper, agent=agent, monitor=monitor)


def _table_doc(table: ResultTable | None) -> dict | None:
    if table is None:
        return None
    doc = {
        "columns": table.columns,
        "rows": [list(r) for r in table.rows[:MAX_ROWS]],
        "row_count": table.row_count,
        "truncated": table.row_count > MAX_ROWS,
    }
    return doc


def _reply_doc(reply) -> dict:
    doc = reply.to_doc()
    doc["table"] = _table_doc(reply.table)
    return doc


def create_app(runtime: Runtime) -> FastAPI:
    app = FastAPI(title="provlens", docs_url=None, redoc_url=None)
    app.state.runtime = runtime

    @app.post("/api/chat")
    def chat(body: dict):
        message = (body or {}).get("message", "")
        if not isinstance(message, str) or not message.strip():
            return JSONResponse({"error": "message must be non-empty"}, status_code=400)
        label = (body or {}).get("config_label") or "Full"
        try:
            config = config_from_label(label)
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        session = runtime.session((body or {}).get("session_id"))
        reply = runtime.agent.answer(
            message, config=config, extra_guidelines=session.guidelines,
            guideline_store=session,
        )
        if reply.kind == "error" and "backend unreachable" in reply.summary:
            return JSONResponse(_reply_doc(reply), status_code=503)
        return _reply_doc(reply)

    @app.post("/api/query")
    def run_query(body: dict):
        body = body or {}
        try:
            if "text" in body and body["text"]:
                ir = parse_ir(str(body["text"]))
            else:
                ir = parse_ir_doc(body.get("ir") or {})
        except InvalidQueryError as exc:
            return JSONResponse(
                {"findings": [{"kind": "parse_error", "path": "", "detail": str(exc)}]},
                status_code=422,
            )
        schema = runtime.ctx.schema_snapshot()
        report = validate(ir, schema)
        if not report.ok:
            return JSONResponse({"findings": report.to_doc()}, status_code=422)
        if ir.source == "store":
            if runtime.store is None:
                return JSONResponse(
                    {"findings": [{"kind": "no_store", "path": "", "detail": "no store configured"}]},
                    status_code=422,
                )
            records = runtime.store.load_view()
        else:
            records = runtime.ctx.buffer_view()
        try:
            table = execute(ir, records)
        except Exception as exc:
            return JSONResponse(
                {"findings": [{"kind": "execution_error", "path": "", "detail": str(exc)}]},
                status_code=422,
            )
        doc = _table_doc(table)
        doc["rendered_ir"] = render_ir(ir)
        doc["findings"] = []
        return doc

    @app.get("/api/schema")
    def schema():
        return runtime.ctx.schema_snapshot().to_doc()

    @app.get("/api/guidelines")
    def guidelines(session_id: str | None = None):
        entries = [g.to_doc() for g in runtime.ctx.guidelines()]
        if session_id and session_id in runtime.sessions:
            entries += [g.to_doc() for g in runtime.sessions[session_id].guidelines]
        return {"guidelines": entries}

    @app.post("/api/guidelines")
    def add_guideline(body: dict):
        text = (body or {}).get("text", "")
        session_id = (body or {}).get("session_id")
        try:
            if session_id:
                guideline = runtime.session(session_id).add_guideline(text)
            else:
                guideline = runtime.ctx.add_guideline(text, origin="user")
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        return guideline.to_doc()

    @app.get("/api/anomalies")
    def anomalies(limit: int = 50):
        return {"anomalies": [r.to_doc() for r in runtime.ctx.anomalies(limit=limit)]}

    @app.get("/api/stats")
    def stats():
        doc = runtime.ctx.stats()
        if runtime.store is not None:
            doc["store"] = runtime.store.stats()
        return doc

    @app.post("/api/demo/synthetic")
    def demo_synthetic(body: dict | None = None):
        import uuid

        from .capture import CaptureSession, SyntheticSpec, run_synthetic
        from .hub import BufferedProducer, FlushPolicy

        body = body or {}
        n = int(body.get("inputs", 10))
        seed = int(body.get("seed", 0))
        workflow_id = f"demo-{uuid.uuid4().hex[:8]}"
        producer = BufferedProducer(
            runtime.hub, "tasks", FlushPolicy(max_buffer=64, max_interval_ms=20)
        )
        session = CaptureSession("demo-campaign", workflow_id, producer)
        summary = run_synthetic(SyntheticSpec(n_inputs=n, seed=seed), session)
        producer.close()
        return summary

    @app.post("/api/demo/anomaly")
    def demo_anomaly(body: dict | None = None):
        import uuid

        from .records import TaskRecord

        if runtime.monitor is None:
            return JSONResponse({"error": "anomaly monitor disabled"}, status_code=409)
        tag = uuid.uuid4().hex[:8]
        activity = f"spike-{tag}"
        series = [12.0 + (i % 3) for i in range(30)] + [900.0]
        records = [
            TaskRecord(
                task_id=f"{activity}-{i:03d}", activity_id=activity,
                used={"step": i}, generated={"load": value}, status="FINISHED",
            )
            for i, value in enumerate(series)
        ]
        runtime.hub.publish("tasks", records)
        deadline = time.time() + 5
        wanted = {r.task_id for r in records}
        while time.time() < deadline:
            buffered = {r.task_id for r in runtime.ctx.buffer_view()}
            if wanted <= buffered:
                break
            time.sleep(0.02)
        published = runtime.monitor.sweep_once()
        mine = [r.to_doc() for r in published if r.used.get("source_task_id", "").startswith(activity)]
        return {"activity": activity, "published": len(published), "anomalies": mine}

    @app.websocket("/api/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        loop = asyncio.get_running_loop()
        queue: asyncio.Queue = asyncio.Queue(maxsize=4096)
        subs = []
        threads = []
        stopping = threading.Event()

        def pump(sub, kind: str):
            while not stopping.is_set():
                try:
                    record = sub.receive(timeout=0.2)
                except EOFError:
                    return
                if record is None:
                    continue
                event = {"kind": kind, "payload": record.to_doc()}
                try:
                    loop.call_soon_threadsafe(queue.put_nowait, event)
                except RuntimeError:
                    return

        for topic, kind in STREAM_TOPICS.items():
            sub = runtime.hub.subscribe(topic)
            subs.append(sub)
            thread = threading.Thread(target=pump, args=(sub, kind), daemon=True)
            thread.start()
            threads.append(thread)
        try:
            while True:
                event = await queue.get()
                await ws.send_json(event)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            stopping.set()
            for sub in subs:
                sub.close()

    return app
