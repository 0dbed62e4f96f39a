"""Evaluation harness: golden queries, judges, the config matrix, reports.

The shipped query set targets the synthetic workload: 20 natural-language
questions, evenly split OLAP/OLTP, with data-type tag totals of 7 control
flow, 7 dataflow, 8 scheduling, and 9 telemetry (some questions span two
types). Each question carries a hand-written gold query that is validated
and executed against the deterministic fixture at build time.

Scoring favors functional equivalence: the rule-based oracle judge returns
1.0 whenever the generated query produces the same result table as the
gold one, and otherwise hands out partial credit by component overlap
(0.40 filters, 0.25 aggregations, 0.15 group keys, 0.10 projections,
0.05 sort, 0.05 limit; each component scored by Jaccard overlap of
canonicalized elements). An optional LLM judge prompts any backend to
score the same pair. Every question runs R times per (config, model) and
reports use the per-query median, never raw repetition means.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .agent import Agent, MockBackend, PromptConfig, assemble_prompt
from .capture import CaptureSession, ListProducer, SyntheticSpec, run_synthetic
from .context import ContextManager, DataflowSchema
from .query import (
    QueryExecutionError,
    QueryIR,
    execute,
    parse_ir_doc,
    render_ir,
    validate,
)
from .records import QueryClass, TaskRecord

# --- deterministic synthetic fixture ---------------------------------------------


class _TickClock:
    def __init__(self, start: float = 1_750_000_000.0, step: float = 0.25):
        self.now = start
        self.step = step

    def __call__(self) -> float:
        self.now += self.step
        return self.now


def build_synthetic_fixture(n_inputs: int = 20, seed: int = 7) -> list[TaskRecord]:
    """Synthetic run with injected clock, telemetry, and hostnames."""
    producer = ListProducer()
    hosts = [f"node-{i}" for i in range(4)]
    counter = {"n": 0}

    def telemetry() -> dict:
        n = counter["n"]
        counter["n"] += 1
        return {
            "cpu": {"percent": round(10 + (n * 13) % 81, 1)},
            "mem": {"percent": round(20 + (n * 7) % 61, 1)},
        }

    session = CaptureSession(
        campaign_id="eval-campaign",
        workflow_id="eval-workflow",
        producer=producer,
        clock=_TickClock(),
        telemetry_source=telemetry,
        hostname=lambda: hosts[len(producer.records) % len(hosts)],
    )
    run_synthetic(SyntheticSpec(n_inputs=n_inputs, seed=seed), session)
    return producer.records


# --- golden queries ------------------------------------------------------------


@dataclass(frozen=True)
class GoldenQuery:
    id: str
    nl_text: str
    query_class: QueryClass
    gold_ir: QueryIR
    notes: str = ""

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "nl_text": self.nl_text,
            "class": {
                "nature": self.query_class.nature,
                "mode": self.query_class.mode,
                "workload": self.query_class.workload,
                "data_types": sorted(self.query_class.data_types),
            },
            "gold_ir": self.gold_ir.to_doc(),
            "notes": self.notes,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "GoldenQuery":
        klass = doc["class"]
        return cls(
            id=doc["id"],
            nl_text=doc["nl_text"],
            query_class=QueryClass(
                klass["nature"], klass["mode"], klass["workload"],
                frozenset(klass["data_types"]),
            ),
            gold_ir=parse_ir_doc(doc["gold_ir"]),
            notes=doc.get("notes", ""),
        )


@dataclass
class QuerySet:
    queries: list[GoldenQuery]
    fixture_spec: str
    fixture: list[TaskRecord] = field(repr=False, default_factory=list)

    def to_doc(self) -> dict:
        return {
            "fixture_spec": self.fixture_spec,
            "queries": [q.to_doc() for q in self.queries],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "QuerySet":
        query_set = cls(
            queries=[GoldenQuery.from_doc(q) for q in doc["queries"]],
            fixture_spec=doc["fixture_spec"],
        )
        query_set.fixture = build_fixture_from_spec(doc["fixture_spec"])
        return query_set


def build_fixture_from_spec(spec: str) -> list[TaskRecord]:
    if spec.startswith("synthetic:"):
        params = dict(part.split("=") for part in spec.split(":", 1)[1].split(","))
        return build_synthetic_fixture(
            n_inputs=int(params.get("n", 20)), seed=int(params.get("seed", 7))
        )
    raise ValueError(f"unknown fixture spec {spec!r}")


def _qc(workload: str, *types: str) -> QueryClass:
    return QueryClass("retrospective", "online", workload, frozenset(types))


def build_synthetic_query_set(n_inputs: int = 20, seed: int = 7) -> QuerySet:
    """The shipped 20-query set plus its deterministic fixture."""
    fixture = build_synthetic_fixture(n_inputs=n_inputs, seed=seed)
    reduces = [r for r in fixture if r.activity_id == "reduce"]
    squares = [r for r in fixture if r.activity_id == "square"]
    lineage_source = reduces[0]
    lookup_a = squares[1]
    lookup_b = reduces[2]

    def ir(**kwargs) -> QueryIR:
        return parse_ir_doc({"source": "buffer", **kwargs})

    queries = [
        GoldenQuery(
            "q01", "How many tasks ran for each activity?", _qc("OLAP", "control_flow"),
            ir(group_by=["activity_id"], aggregations=[["*", "count", "task_count"]]),
        ),
        GoldenQuery(
            "q02", "What is the mean of the sums computed by the reduce step?",
            _qc("OLAP", "dataflow"),
            ir(filters=[["activity_id", "eq", "reduce"]],
               aggregations=[["generated.sum", "mean", "sum"]]),
        ),
        GoldenQuery(
            "q03", "What is the maximum x generated by the generate activity?",
            _qc("OLAP", "dataflow"),
            ir(filters=[["activity_id", "eq", "generate"]],
               sort=[["generated.x", "desc"]], limit=1),
        ),
        GoldenQuery(
            "q04", "What is the mean cpu percent at end for each activity?",
            _qc("OLAP", "telemetry", "control_flow"),
            ir(group_by=["activity_id"],
               aggregations=[["telemetry_at_end.cpu.percent", "mean", "percent"]]),
        ),
        GoldenQuery(
            "q05", "What is the average cpu percent at start per hostname?",
            _qc("OLAP", "telemetry", "scheduling"),
            ir(group_by=["hostname"],
               aggregations=[["telemetry_at_start.cpu.percent", "mean", "percent"]]),
        ),
        GoldenQuery(
            "q06", "How many tasks finished successfully?", _qc("OLAP", "control_flow"),
            ir(filters=[["status", "eq", "FINISHED"]],
               aggregations=[["*", "count", "task_count"]]),
        ),
        GoldenQuery(
            "q07", "Which host executed the most tasks?", _qc("OLAP", "scheduling"),
            ir(group_by=["hostname"], aggregations=[["*", "count", "task_count"]],
               sort=[["task_count", "desc"]], limit=1),
        ),
        GoldenQuery(
            "q08", "What is the total of all square outputs?", _qc("OLAP", "dataflow"),
            ir(filters=[["activity_id", "eq", "square"]],
               aggregations=[["generated.square", "sum", "square"]]),
        ),
        GoldenQuery(
            "q09", "What is the maximum memory percent at end per hostname?",
            _qc("OLAP", "telemetry", "scheduling"),
            ir(group_by=["hostname"],
               aggregations=[["telemetry_at_end.mem.percent", "max", "percent"]]),
        ),
        GoldenQuery(
            "q10", "What is the mean cpu percent at start grouped by status?",
            _qc("OLAP", "telemetry", "control_flow"),
            ir(group_by=["status"],
               aggregations=[["telemetry_at_start.cpu.percent", "mean", "percent"]]),
        ),
        GoldenQuery(
            "q11",
            "Show the task id, hostname, and sum for the task that produced the largest sum.",
            _qc("OLTP", "dataflow", "scheduling"),
            ir(projections=["task_id", "hostname", "generated.sum"],
               sort=[["generated.sum", "desc"]], limit=1),
        ),
        GoldenQuery(
            "q12", "Which task had the highest cpu percent at the end, and on which host?",
            _qc("OLTP", "telemetry", "scheduling"),
            ir(sort=[["telemetry_at_end.cpu.percent", "desc"]], limit=1),
        ),
        GoldenQuery(
            "q13",
            "List the task ids, start times, and cpu percent at start of the 5 earliest tasks.",
            _qc("OLTP", "scheduling", "telemetry"),
            ir(projections=["task_id", "started_at", "telemetry_at_start.cpu.percent"],
               sort=[["started_at", "asc"]], limit=5),
        ),
        GoldenQuery(
            "q14", "What did the report task output?", _qc("OLTP", "dataflow"),
            ir(filters=[["activity_id", "eq", "report"]]),
        ),
        GoldenQuery(
            "q15", "Show the status, hostname, and start time of the most recent task.",
            _qc("OLTP", "control_flow", "scheduling"),
            ir(projections=["status", "hostname", "started_at"],
               sort=[["started_at", "desc"]], limit=1),
        ),
        GoldenQuery(
            "q16", "Show the task ids of tasks on host node-1 with used x above 60.",
            _qc("OLTP", "scheduling", "dataflow"),
            ir(filters=[["hostname", "eq", "node-1"], ["used.x", "gt", 60]],
               projections=["task_id"]),
        ),
        GoldenQuery(
            "q17",
            "Show the task ids and cpu percent at start for tasks with used x above 60.",
            _qc("OLTP", "dataflow", "telemetry"),
            ir(filters=[["used.x", "gt", 60]],
               projections=["task_id", "telemetry_at_start.cpu.percent"]),
        ),
        GoldenQuery(
            "q18", f"How many tasks were informed by task {lineage_source.task_id}?",
            _qc("OLTP", "control_flow"),
            ir(filters=[["was_informed_by", "contains", lineage_source.task_id]],
               aggregations=[["*", "count", "task_count"]]),
        ),
        GoldenQuery(
            "q19", f"Show the status and cpu percent at end of task {lookup_a.task_id}.",
            _qc("OLTP", "control_flow", "telemetry"),
            ir(filters=[["task_id", "eq", lookup_a.task_id]],
               projections=["status", "telemetry_at_end.cpu.percent"]),
        ),
        GoldenQuery(
            "q20", f"Show the memory percent at start of task {lookup_b.task_id}.",
            _qc("OLTP", "telemetry"),
            ir(filters=[["task_id", "eq", lookup_b.task_id]],
               projections=["telemetry_at_start.mem.percent"]),
        ),
    ]
    query_set = QuerySet(
        queries=queries,
        fixture_spec=f"synthetic:n={n_inputs},seed={seed}",
        fixture=fixture,
    )
    verify_query_set(query_set)
    return query_set


def verify_query_set(query_set: QuerySet) -> None:
    """Every gold query must validate and execute on the fixture."""
    schema = schema_of(query_set.fixture)
    for query in query_set.queries:
        report = validate(query.gold_ir, schema)
        if not report.ok:
            raise ValueError(f"{query.id} gold does not validate: {report.findings}")
        execute(query.gold_ir, query_set.fixture)  # raises on execution problems


def query_set_distribution(query_set: QuerySet) -> dict:
    workloads = Counter(q.query_class.workload for q in query_set.queries)
    tags = Counter()
    for q in query_set.queries:
        for dt in q.query_class.data_types:
            tags[(dt, q.query_class.workload)] += 1
    by_type = Counter()
    for (dt, _), n in tags.items():
        by_type[dt] += n
    return {
        "queries": len(query_set.queries),
        "workloads": dict(workloads),
        "by_type": dict(by_type),
        "by_type_workload": {f"{dt}/{wl}": n for (dt, wl), n in sorted(tags.items())},
    }


def schema_of(records: list[TaskRecord]) -> DataflowSchema:
    ctx = ContextManager()
    for record in records:
        ctx.ingest(record)
    return ctx.schema_snapshot()


# --- judges -------------------------------------------------------------------


@dataclass(frozen=True)
class JudgeScore:
    score: float
    rationale: str
    judge: str

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


PARTIAL_WEIGHTS = {
    "filters": 0.40,
    "aggregations": 0.25,
    "group_by": 0.15,
    "projections": 0.10,
    "sort": 0.05,
    "limit": 0.05,
}


def _canon_path(path: str, schema: DataflowSchema) -> str:
    if path in schema.common_fields or path.startswith("telemetry_at_"):
        return path
    if path.startswith("used.") or path.startswith("generated."):
        return path
    paths = schema.field_paths()
    for role in ("generated", "used"):
        if path in paths[role] or f"{path}[]" in paths[role]:
            return f"{role}.{path}"
    return path


def _components(ir: QueryIR, schema: DataflowSchema) -> dict[str, set]:
    alias_to_agg = {a.alias: a for a in ir.aggregations}

    def sort_elem(key: str, direction: str):
        agg = alias_to_agg.get(key)
        if agg is not None:
            return (_canon_path(agg.path, schema), agg.fn, direction)
        return (_canon_path(key, schema), direction)

    return {
        "filters": {
            (_canon_path(f.path, schema), f.op, json.dumps(f.value, sort_keys=True))
            for f in ir.filters
        },
        "aggregations": {(_canon_path(a.path, schema), a.fn) for a in ir.aggregations},
        "group_by": {_canon_path(g, schema) for g in ir.group_by},
        "projections": {_canon_path(p, schema) for p in ir.projections},
        "sort": {sort_elem(s.key, s.direction) for s in ir.sort},
        "limit": set() if ir.limit is None else {ir.limit},
    }


def _jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union)


def _results_equal(gold: QueryIR, gold_table, generated_table) -> bool:
    if set(gold_table.columns) != set(generated_table.columns):
        return False
    order = sorted(gold_table.columns)
    gold_idx = [gold_table.columns.index(c) for c in order]
    gen_idx = [generated_table.columns.index(c) for c in order]
    gold_rows = [tuple(row[i] for i in gold_idx) for row in gold_table.rows]
    gen_rows = [tuple(row[i] for i in gen_idx) for row in generated_table.rows]
    if gold.sort:
        return gold_rows == gen_rows
    return Counter(map(repr, gold_rows)) == Counter(map(repr, gen_rows))


def oracle_judge(
    gold: QueryIR,
    generated: QueryIR | None,
    fixture: list[TaskRecord],
    schema: DataflowSchema | None = None,
) -> JudgeScore:
    """Rule-based scoring; result equality dominates, components otherwise."""
    schema = schema or schema_of(fixture)
    try:
        gold_table = execute(gold, fixture)
    except QueryExecutionError as exc:
        raise ValueError(f"gold query failed to execute: {exc}") from exc
    if generated is None:
        return JudgeScore(0.0, "no valid query generated", "oracle")
    if not validate(generated, schema).ok:
        return JudgeScore(0.0, "generated query references unknown fields", "oracle")
    try:
        generated_table = execute(generated, fixture)
    except QueryExecutionError as exc:
        return JudgeScore(0.0, f"generated query failed to execute: {exc}", "oracle")
    if _results_equal(gold, gold_table, generated_table):
        return JudgeScore(1.0, "result tables match", "oracle")
    gold_parts = _components(gold, schema)
    gen_parts = _components(generated, schema)
    total = 0.0
    detail = []
    for name, weight in PARTIAL_WEIGHTS.items():
        overlap = _jaccard(gold_parts[name], gen_parts[name])
        total += weight * overlap
        detail.append(f"{name}={overlap:.2f}")
    return JudgeScore(round(total, 10), "partial: " + ", ".join(detail), "oracle")


JUDGE_PROMPT_MARKER = "You are an expert evaluator of structured provenance queries"


def llm_judge_prompt(gold: QueryIR, generated: QueryIR | None, schema: DataflowSchema,
                     guidelines: list) -> str:
    generated_text = render_ir(generated) if generated is not None else "(no valid query)"
    guideline_text = "\n".join(f"- {g.text}" for g in guidelines) or "(none)"
    return (
        f"{JUDGE_PROMPT_MARKER}. Compare the generated query against the gold "
        "standard for the same user question. Score functional equivalence, not "
        "syntax: award high scores when both queries would answer the question "
        "identically, and penalize invalid column references or incorrect "
        "logic. Reply with 'Score: <number between 0.0 and 1.0>' and one "
        "sentence of rationale.\n\n"
        f"Gold query: {render_ir(gold)}\n"
        f"Generated query: {generated_text}\n\n"
        f"Schema:\n{json.dumps(schema.to_doc()['activities'], sort_keys=True)}\n\n"
        f"Guidelines:\n{guideline_text}\n"
    )


class JudgeUnavailable(RuntimeError):
    pass


def llm_judge(
    gold: QueryIR,
    generated: QueryIR | None,
    schema: DataflowSchema,
    guidelines: list,
    backend,
) -> JudgeScore:
    """Ask a backend to score the pair; unparseable replies score 0.0."""
    prompt = llm_judge_prompt(gold, generated, schema, guidelines)
    try:
        response = backend.complete(prompt, temperature=0.0)
    except Exception as exc:
        raise JudgeUnavailable(str(exc)) from exc
    name = f"llm:{getattr(backend, 'name', 'unknown')}"
    import re as _re

    match = _re.search(r"[Ss]core[:\s]+([01](?:\.\d+)?)", response)
    if not match:
        match = _re.search(r"\b([01]\.\d+|0|1)\b", response)
    if not match:
        return JudgeScore(0.0, "unparseable", name)
    value = float(match.group(1))
    if not 0.0 <= value <= 1.0:
        return JudgeScore(0.0, "unparseable", name)
    return JudgeScore(value, response.strip()[:200], name)


class OracleJudge:
    """Callable judge wrapper used by run_matrix."""

    name = "oracle"

    def __init__(self, fixture: list[TaskRecord], schema: DataflowSchema):
        self.fixture = fixture
        self.schema = schema

    def __call__(self, gold: QueryIR, generated: QueryIR | None) -> JudgeScore:
        return oracle_judge(gold, generated, self.fixture, self.schema)


class LLMJudge:
    def __init__(self, backend, schema: DataflowSchema, guidelines: list):
        self.backend = backend
        self.schema = schema
        self.guidelines = guidelines
        self.name = f"llm:{getattr(backend, 'name', 'unknown')}"

    def __call__(self, gold: QueryIR, generated: QueryIR | None) -> JudgeScore:
        return llm_judge(gold, generated, self.schema, self.guidelines, self.backend)


# --- matrix runs ----------------------------------------------------------------


@dataclass
class EvalRecord:
    query_id: str
    config_label: str
    model: str
    repetition: int
    generated_ir: dict | None
    reply_kind: str
    scores: dict[str, float | None]
    token_estimate: int
    prompt_tokens: int
    latency_ms: float

    def to_row(self, judges: list[str]) -> list:
        return [
            self.query_id, self.config_label, self.model, self.repetition,
            json.dumps(self.generated_ir) if self.generated_ir else "",
            self.reply_kind,
            *[self.scores.get(j, None) for j in judges],
            self.token_estimate, self.prompt_tokens, round(self.latency_ms, 3),
        ]


@dataclass
class EvalReport:
    records: list[EvalRecord]
    judges: list[str]
    per_query_medians: dict  # (query_id, config, model, judge) -> median
    by_config: dict          # (config, model, judge) -> {mean_score, mean_tokens, mean_latency_ms}
    by_class: dict           # (workload, data_type, model, judge) -> mean at final config
    judge_model: dict        # (judge, model) -> mean at final config
    meta: dict

    def to_doc(self) -> dict:
        return {
            "judges": self.judges,
            "records": [r.to_row(self.judges) for r in self.records],
            "per_query_medians": {
                "|".join(k): v for k, v in sorted(self.per_query_medians.items())
            },
            "by_config": {"|".join(k): v for k, v in sorted(self.by_config.items())},
            "by_class": {"|".join(k): v for k, v in sorted(self.by_class.items())},
            "judge_model": {"|".join(k): v for k, v in sorted(self.judge_model.items())},
            "meta": self.meta,
        }


def run_matrix(
    query_set: QuerySet,
    configs: list[PromptConfig],
    models: list,
    judges: list | None = None,
    repetitions: int = 3,
    timer=time.perf_counter,
) -> EvalReport:
    """Run every (query, config, model) cell R times and aggregate medians."""
    ctx = ContextManager()
    for record in query_set.fixture:
        ctx.ingest(record)
    schema = ctx.schema_snapshot()
    if judges is None:
        judges = [OracleJudge(query_set.fixture, schema)]
    judge_names = [j.name for j in judges]

    records: list[EvalRecord] = []
    for model in models:
        agent = Agent(ctx, model)
        model_name = getattr(model, "name", "model")
        for config in configs:
            for query in query_set.queries:
                for rep in range(1, repetitions + 1):
                    t0 = timer()
                    reply = agent.answer(query.nl_text, config=config)
                    latency_ms = (timer() - t0) * 1000.0
                    generated = reply.ir
                    scores: dict[str, float | None] = {}
                    for judge in judges:
                        try:
                            scores[judge.name] = judge(query.gold_ir, generated).score
                        except JudgeUnavailable:
                            scores[judge.name] = None  # missing, not zero
                    records.append(
                        EvalRecord(
                            query_id=query.id,
                            config_label=config.label,
                            model=model_name,
                            repetition=rep,
                            generated_ir=generated.to_doc() if generated else None,
                            reply_kind=reply.kind,
                            scores=scores,
                            token_estimate=reply.token_estimate,
                            prompt_tokens=reply.prompt_tokens,
                            latency_ms=latency_ms,
                        )
                    )

    per_query_medians: dict[tuple, float] = {}
    cells: dict[tuple, list[EvalRecord]] = {}
    for record in records:
        cells.setdefault((record.query_id, record.config_label, record.model), []).append(record)
    for (query_id, config_label, model_name), cell in cells.items():
        for judge_name in judge_names:
            values = [r.scores.get(judge_name) for r in cell]
            present = [v for v in values if v is not None]
            if present:
                per_query_medians[(query_id, config_label, model_name, judge_name)] = (
                    statistics.median(present)
                )

    by_config: dict[tuple, dict] = {}
    for config in configs:
        for model in models:
            model_name = getattr(model, "name", "model")
            cell_records = [
                r for r in records
                if r.config_label == config.label and r.model == model_name
            ]
            for judge_name in judge_names:
                medians = [
                    per_query_medians[(q.id, config.label, model_name, judge_name)]
                    for q in query_set.queries
                    if (q.id, config.label, model_name, judge_name) in per_query_medians
                ]
                by_config[(config.label, model_name, judge_name)] = {
                    "mean_score": statistics.fmean(medians) if medians else None,
                    "mean_tokens": statistics.fmean([r.token_estimate for r in cell_records]),
                    "mean_prompt_tokens": statistics.fmean(
                        [r.prompt_tokens for r in cell_records]
                    ),
                    "mean_latency_ms": statistics.fmean([r.latency_ms for r in cell_records]),
                    "queries": len(medians),
                }

    final_config = configs[-1].label if configs else None
    by_class: dict[tuple, float] = {}
    judge_model: dict[tuple, float] = {}
    if final_config is not None:
        for model in models:
            model_name = getattr(model, "name", "model")
            for judge_name in judge_names:
                class_bins: dict[tuple, list[float]] = {}
                all_medians: list[float] = []
                for query in query_set.queries:
                    key = (query.id, final_config, model_name, judge_name)
                    if key not in per_query_medians:
                        continue
                    median = per_query_medians[key]
                    all_medians.append(median)
                    for dt in sorted(query.query_class.data_types):
                        class_bins.setdefault((query.query_class.workload, dt), []).append(median)
                for (workload, dt), values in class_bins.items():
                    by_class[(workload, dt, model_name, judge_name)] = statistics.fmean(values)
                if all_medians:
                    judge_model[(judge_name, model_name)] = statistics.fmean(all_medians)

    meta = {
        "queries": len(query_set.queries),
        "configs": [c.label for c in configs],
        "models": [getattr(m, "name", "model") for m in models],
        "repetitions": repetitions,
        "final_config": final_config,
        "expected_records": len(query_set.queries) * len(configs) * len(models) * repetitions,
        "gaps": sum(
            1 for r in records for j in judge_names if r.scores.get(j) is None
        ),
    }
    return EvalReport(
        records=records,
        judges=judge_names,
        per_query_medians=per_query_medians,
        by_config=by_config,
        by_class=by_class,
        judge_model=judge_model,
        meta=meta,
    )


# --- report emission --------------------------------------------------------------


def emit_report(report: EvalReport, outdir: str | Path) -> dict[str, Path]:
    """Write per-record and aggregate CSVs plus bar charts; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    records_csv = outdir / "records.csv"
    with open(records_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["query_id", "config", "model", "repetition", "generated_ir", "reply_kind"]
            + [f"score[{j}]" for j in report.judges]
            + ["token_estimate", "prompt_tokens", "latency_ms"]
        )
        for record in report.records:
            writer.writerow(record.to_row(report.judges))
    paths["records"] = records_csv

    medians_csv = outdir / "per_query_medians.csv"
    with open(medians_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_id", "config", "model", "judge", "median_score"])
        for key, value in sorted(report.per_query_medians.items()):
            writer.writerow([*key, value])
    paths["per_query_medians"] = medians_csv

    config_csv = outdir / "by_config.csv"
    with open(config_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["config", "model", "judge", "mean_score", "mean_tokens",
             "mean_prompt_tokens", "mean_latency_ms", "queries"]
        )
        for (config, model, judge), row in report.by_config.items():
            writer.writerow([
                config, model, judge, row["mean_score"], row["mean_tokens"],
                row["mean_prompt_tokens"], row["mean_latency_ms"], row["queries"],
            ])
    paths["by_config"] = config_csv

    class_csv = outdir / "by_class.csv"
    with open(class_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["workload", "data_type", "model", "judge", "mean_median_score"])
        for key, value in sorted(report.by_class.items()):
            writer.writerow([*key, value])
    paths["by_class"] = class_csv

    judge_csv = outdir / "judge_model.csv"
    with open(judge_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["judge", "model", "mean_median_score"])
        for key, value in sorted(report.judge_model.items()):
            writer.writerow([*key, value])
    paths["judge_model"] = judge_csv

    paths.update(_emit_charts(report, outdir))
    return paths


def _emit_charts(report: EvalReport, outdir: Path) -> dict[str, Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths: dict[str, Path] = {}
    config_order = report.meta["configs"]
    judges = report.judges
    models = report.meta["models"]

    fig, ax = plt.subplots(figsize=(9, 4.5))
    width = 0.8 / max(1, len(judges) * len(models))
    for i, judge in enumerate(judges):
        for j, model in enumerate(models):
            xs = range(len(config_order))
            ys = [
                report.by_config.get((c, model, judge), {}).get("mean_score") or 0.0
                for c in config_order
            ]
            offset = (i * len(models) + j) * width
            ax.bar([x + offset for x in xs], ys, width=width, label=f"{model} / {judge}")
    ax.set_xticks([x + 0.4 for x in range(len(config_order))])
    ax.set_xticklabels(config_order, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("mean of per-query median scores")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=7)
    ax.set_title("Scores by prompt configuration")
    fig.tight_layout()
    path = outdir / "scores_by_config.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    paths["scores_by_config"] = path

    fig, ax = plt.subplots(figsize=(9, 4.5))
    keys = sorted(report.by_class)
    labels = [f"{wl}\n{dt}" for (wl, dt, _, _) in keys]
    ax.bar(range(len(keys)), [report.by_class[k] for k in keys], color="#4878a8")
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("mean median score")
    ax.set_ylim(0, 1.05)
    ax.set_title(f"Scores by query class (config: {report.meta['final_config']})")
    fig.tight_layout()
    path = outdir / "scores_by_class.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    paths["scores_by_class"] = path

    fig, ax = plt.subplots(figsize=(9, 4.5))
    for model in models:
        for judge in judges[:1]:
            ys = [
                report.by_config.get((c, model, judge), {}).get("mean_tokens") or 0.0
                for c in config_order
            ]
            ax.plot(range(len(config_order)), ys, marker="o", label=model)
    ax.set_xticks(range(len(config_order)))
    ax.set_xticklabels(config_order, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("mean token estimate (input + output)")
    ax.set_title("Token consumption by prompt configuration")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = outdir / "tokens_by_config.png"
    fig.savefig(path, dpi=110)
    plt.close(fig)
    paths["tokens_by_config"] = path
    return paths


def token_curve(query_set: QuerySet, configs: list[PromptConfig]) -> dict[str, int]:
    """Prompt-size growth across configurations for the set's first query."""
    ctx = ContextManager()
    for record in query_set.fixture:
        ctx.ingest(record)
    schema = ctx.schema_snapshot()
    guidelines = ctx.guidelines()
    question = query_set.queries[0].nl_text
    return {
        config.label: assemble_prompt(config, schema, guidelines, question).token_estimate
        for config in configs
    }


__all__ = [
    "EvalRecord",
    "EvalReport",
    "GoldenQuery",
    "JudgeScore",
    "JudgeUnavailable",
    "LLMJudge",
    "MockBackend",
    "OracleJudge",
    "QuerySet",
    "build_synthetic_fixture",
    "build_synthetic_query_set",
    "emit_report",
    "llm_judge",
    "llm_judge_prompt",
    "oracle_judge",
    "query_set_distribution",
    "run_matrix",
    "schema_of",
    "token_curve",
    "verify_query_set",
]
