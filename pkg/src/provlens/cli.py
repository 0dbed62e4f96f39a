"""Command-line entry points.

    provlens synth  --inputs N --seed S [--store DIR]
    provlens replay --file PATH --rate {max|original|R} [--store DIR]
    provlens query  --ir FILE [--store DIR]
    provlens store  stats --path DIR
    provlens eval   [--query-set synthetic|FILE] [--configs all|A,B] ...
    provlens serve  --port P [--store DIR] [--llm-backend {mock|http}] ...
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .agent import CONFIGS_BY_LABEL, HTTPBackend, MockBackend, PROMPT_CONFIGS
from .capture import CaptureSession, SyntheticSpec, replay_trace, run_synthetic
from .hub import BufferedProducer, FlushPolicy, Hub
from .query import execute, parse_ir, parse_ir_doc, render_ir
from .store import JsonlStore, Keeper, open_store


def _wait_for_store(store: JsonlStore, expected: int, timeout_s: float = 10.0) -> None:
    deadline = time.time() + timeout_s
    while time.time() < deadline and store.record_count < expected:
        time.sleep(0.02)


def cmd_synth(args) -> int:
    hub = Hub()
    store = keeper = None
    if args.store:
        store = JsonlStore(args.store)
        keeper = Keeper(hub, store, topics=("tasks",)).start()
    producer = BufferedProducer(hub, "tasks", FlushPolicy(max_buffer=64, max_interval_ms=50))
    session = CaptureSession(
        campaign_id=args.campaign, workflow_id=args.workflow, producer=producer
    )
    summary = run_synthetic(SyntheticSpec(n_inputs=args.inputs, seed=args.seed), session)
    producer.close()
    if keeper:
        _wait_for_store(store, summary["records"])
        keeper.stop()
        summary["store"] = store.stats()
        store.close()
    print(json.dumps(summary, indent=2))
    return 0


def cmd_replay(args) -> int:
    rate: str | float = args.rate
    if rate not in ("max", "original"):
        rate = float(rate)
    hub = Hub()
    store = keeper = None
    if args.store:
        store = JsonlStore(args.store)
        keeper = Keeper(hub, store, topics=("tasks",)).start()
    summary = replay_trace(args.file, hub, topic="tasks", rate=rate)
    if keeper:
        _wait_for_store(store, summary["published"])
        keeper.stop()
        summary["store"] = store.stats()
        store.close()
    print(json.dumps(summary, indent=2))
    return 0


def cmd_query(args) -> int:
    text = Path(args.ir).read_text(encoding="utf-8").strip()
    try:
        ir = parse_ir_doc(json.loads(text)) if text.startswith("{") else parse_ir(text)
    except Exception as exc:
        print(f"could not parse query: {exc}", file=sys.stderr)
        return 2
    store = open_store(args.store)
    try:
        table = execute(ir, store.load_view())
    finally:
        store.close()
    print(render_ir(ir), file=sys.stderr)
    print(json.dumps({"columns": table.columns, "rows": [list(r) for r in table.rows],
                      "row_count": table.row_count}, indent=2))
    return 0


def cmd_store_stats(args) -> int:
    store = open_store(args.path)
    try:
        print(json.dumps(store.stats(), indent=2))
    finally:
        store.close()
    return 0


def cmd_eval(args) -> int:
    from .evalharness import (
        LLMJudge, OracleJudge, QuerySet, build_synthetic_query_set, emit_report,
        run_matrix, schema_of,
    )

    if args.query_set == "synthetic":
        query_set = build_synthetic_query_set()
    else:
        query_set = QuerySet.from_doc(json.loads(Path(args.query_set).read_text()))
    if args.configs == "all":
        configs = list(PROMPT_CONFIGS)
    else:
        configs = [CONFIGS_BY_LABEL[label.strip()] for label in args.configs.split(",")]
    models = []
    for name in args.model.split(","):
        name = name.strip()
        models.append(MockBackend() if name == "mock" else HTTPBackend.from_env())
    schema = schema_of(query_set.fixture)
    judges = []
    for spec in args.judge.split(","):
        spec = spec.strip()
        if spec == "oracle":
            judges.append(OracleJudge(query_set.fixture, schema))
        elif spec.startswith("llm:"):
            backend = HTTPBackend.from_env()
            backend.name = spec.split(":", 1)[1]
            judges.append(LLMJudge(backend, schema, []))
        else:
            print(f"unknown judge {spec!r}", file=sys.stderr)
            return 2
    report = run_matrix(query_set, configs, models, judges=judges, repetitions=args.reps)
    paths = emit_report(report, args.out)
    for (config, model, judge), row in sorted(report.by_config.items()):
        score = row["mean_score"]
        print(f"{config:28s} {model:10s} {judge:12s} "
              f"score={score if score is None else round(score, 4)} "
              f"tokens={row['mean_tokens']:.0f}")
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_runtime, create_app

    runtime = build_runtime(
        store_dir=args.store,
        buffer_capacity=args.buffer_cap,
        llm_backend=args.llm_backend,
        anomaly=not args.no_anomaly,
    )
    if args.replay:
        replay_trace(args.replay, runtime.hub, rate="max")
    if args.synthetic:
        producer = BufferedProducer(runtime.hub, "tasks", FlushPolicy(64, 50))
        session = CaptureSession("serve-campaign", "serve-workflow", producer)
        run_synthetic(SyntheticSpec(n_inputs=args.synthetic, seed=args.seed), session)
        producer.close()
    app = create_app(runtime)
    if args.frontend and Path(args.frontend).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=args.frontend, html=True), name="ui")
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        runtime.shutdown()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="provlens")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="run the synthetic fan-out/fan-in workflow")
    synth.add_argument("--inputs", type=int, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--store", default=None)
    synth.add_argument("--campaign", default="cli-campaign")
    synth.add_argument("--workflow", default="cli-workflow")
    synth.set_defaults(fn=cmd_synth)

    replay = sub.add_parser("replay", help="replay a JSONL trace onto the hub")
    replay.add_argument("--file", required=True)
    replay.add_argument("--rate", default="max", help="max, original, or records/second")
    replay.add_argument("--store", default=None)
    replay.set_defaults(fn=cmd_replay)

    query = sub.add_parser("query", help="execute a stored query against a store")
    query.add_argument("--ir", required=True, help="file with a JSON query doc or rendered text")
    query.add_argument("--store", required=True)
    query.set_defaults(fn=cmd_query)

    store = sub.add_parser("store", help="store maintenance")
    store_sub = store.add_subparsers(dest="store_command", required=True)
    stats = store_sub.add_parser("stats", help="print store statistics")
    stats.add_argument("--path", required=True)
    stats.set_defaults(fn=cmd_store_stats)

    evaluate = sub.add_parser("eval", help="run the evaluation matrix")
    evaluate.add_argument("--query-set", default="synthetic")
    evaluate.add_argument("--configs", default="all")
    evaluate.add_argument("--model", default="mock")
    evaluate.add_argument("--judge", default="oracle")
    evaluate.add_argument("--reps", type=int, default=3)
    evaluate.add_argument("--out", default="eval_out")
    evaluate.set_defaults(fn=cmd_eval)

    serve = sub.add_parser("serve", help="start the HTTP/WebSocket service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--store", default=None)
    serve.add_argument("--buffer-cap", type=int, default=10_000)
    serve.add_argument("--llm-backend", choices=("mock", "http"), default="mock")
    serve.add_argument("--no-anomaly", action="store_true")
    serve.add_argument("--replay", default=None, help="trace to replay into the buffer on start")
    serve.add_argument("--synthetic", type=int, default=0, help="run N synthetic inputs on start")
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--frontend", default="frontend/dist", help="static UI directory")
    serve.set_defaults(fn=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
