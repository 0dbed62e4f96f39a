"""Live context: recent-task buffer, inferred dataflow schema, guidelines.

The schema is the piece that keeps prompts small: instead of shipping raw
records to a language model, we maintain one compact summary per activity
(field paths, inferred types, a few example values). It grows as records
arrive, survives buffer eviction, and only ever widens a field's type
along bool → int → float → string (anything else becomes "mixed").
"""

from __future__ import annotations

import copy
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .hub import Hub
from .records import TaskRecord

DEFAULT_BUFFER_CAPACITY = 10_000
MAX_EXAMPLES_PER_FIELD = 3
MAX_EXAMPLE_CHARS = 64

_TYPE_CHAIN = ("bool", "int", "float", "string")

COMMON_FIELDS: dict[str, str] = {
    "task_id": "unique identifier of one task execution",
    "campaign_id": "identifier of the campaign this run belongs to",
    "workflow_id": "identifier of the workflow run",
    "activity_id": "name of the activity (function/step) the task executed",
    "hostname": "machine that executed the task",
    "status": "execution status: SUBMITTED, RUNNING, FINISHED, or ERROR",
    "type": "record kind: task, llm_interaction, anomaly, or agent",
    "started_at": "task start time, seconds since epoch (fractional)",
    "ended_at": "task end time, seconds since epoch (fractional)",
    "was_informed_by": "list of upstream task ids this task depended on",
    "was_associated_with": "agent id the task is attributed to",
    "anomalous": "true when the anomaly monitor flagged this task",
    "telemetry_at_start": "telemetry sample at task start (e.g. cpu.percent, mem.percent)",
    "telemetry_at_end": "telemetry sample at task end (e.g. cpu.percent, mem.percent)",
}


def scalar_type(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    return "mixed"


def widen(current: str | None, incoming: str) -> str:
    """Join two inferred types; widening only, never narrowing."""
    if current is None or current == incoming:
        return incoming
    if current in _TYPE_CHAIN and incoming in _TYPE_CHAIN:
        return _TYPE_CHAIN[max(_TYPE_CHAIN.index(current), _TYPE_CHAIN.index(incoming))]
    if current.startswith("array<") and incoming.startswith("array<"):
        inner = widen(current[6:-1], incoming[6:-1])
        return f"array<{inner}>"
    return "mixed"


def flatten_payload(doc: dict, prefix: str = "") -> list[tuple[str, str, str, int | None]]:
    """Leaves of a used/generated document.

    Yields (path, inferred_type, example_string, array_length). Nested
    documents use dotted paths; an array at path p is summarized at "p[]"
    with its element type and observed length, and dict elements contribute
    leaves under "p[].field".
    """
    out: list[tuple[str, str, str, int | None]] = []
    for key, value in doc.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.extend(flatten_payload(value, prefix=f"{path}."))
        elif isinstance(value, list):
            elem: str | None = None
            for item in value:
                if isinstance(item, dict):
                    elem = widen(elem, "object")
                    out.extend(flatten_payload(item, prefix=f"{path}[]."))
                elif isinstance(item, list):
                    elem = widen(elem, "array<?>")
                else:
                    elem = widen(elem, scalar_type(item))
            shown = ",".join(_stringify(v) for v in value[:4])
            out.append((f"{path}[]", f"array<{elem or '?'}>", f"[{shown}]", len(value)))
        else:
            out.append((path, scalar_type(value), _stringify(value), None))
    return out


def _stringify(value) -> str:
    text = str(value)
    return text[:MAX_EXAMPLE_CHARS]


@dataclass
class FieldSpec:
    """What we know about one field path of one activity."""

    path: str
    inferred_type: str | None = None
    examples: list[str] = field(default_factory=list)
    observed_count: int = 0
    lengths: list[int] = field(default_factory=list)  # arrays only

    def observe(self, type_name: str, example: str, length: int | None = None) -> None:
        self.inferred_type = widen(self.inferred_type, type_name)
        self.observed_count += 1
        if example not in self.examples and len(self.examples) < MAX_EXAMPLES_PER_FIELD:
            self.examples.append(example)
        if length is not None and length not in self.lengths:
            self.lengths.append(length)
            self.lengths.sort()

    def to_doc(self) -> dict:
        doc = {
            "type": self.inferred_type,
            "examples": list(self.examples),
            "observed_count": self.observed_count,
        }
        if self.lengths:
            doc["lengths"] = list(self.lengths)
        return doc


@dataclass
class ActivitySchema:
    activity_id: str
    inputs: dict[str, FieldSpec] = field(default_factory=dict)
    outputs: dict[str, FieldSpec] = field(default_factory=dict)
    task_count: int = 0

    def to_doc(self) -> dict:
        return {
            "task_count": self.task_count,
            "inputs": {p: self.inputs[p].to_doc() for p in sorted(self.inputs)},
            "outputs": {p: self.outputs[p].to_doc() for p in sorted(self.outputs)},
        }


@dataclass
class DataflowSchema:
    activities: dict[str, ActivitySchema] = field(default_factory=dict)
    common_fields: dict[str, str] = field(default_factory=lambda: dict(COMMON_FIELDS))

    def to_doc(self) -> dict:
        return {
            "activities": {a: self.activities[a].to_doc() for a in sorted(self.activities)},
            "common_fields": dict(self.common_fields),
        }

    def field_paths(self) -> dict[str, set[str]]:
        """All (role-prefixed) payload paths, keyed by "used"/"generated"."""
        paths = {"used": set(), "generated": set()}
        for schema in self.activities.values():
            paths["used"].update(schema.inputs)
            paths["generated"].update(schema.outputs)
        return paths


@dataclass
class Guideline:
    id: str
    text: str
    origin: str  # "static" or "user"
    added_at: float

    def to_doc(self) -> dict:
        return {"id": self.id, "text": self.text, "origin": self.origin, "added_at": self.added_at}


STATIC_GUIDELINES = (
    "When filtering by time range, compare against the started_at field (seconds since epoch).",
    "When asked for the earliest, latest, or most recent task, sort by started_at, not by task_id.",
    "Use activity_id to select tasks of a single activity; valid names appear in the schema.",
    "Use status ERROR to find failed tasks and status FINISHED for completed ones.",
    "Task parameters live under used.* and task results under generated.*; prefer generated.* for outcomes.",
    "hostname identifies where a task ran; group by hostname for placement questions.",
    "CPU and memory readings live under telemetry_at_start and telemetry_at_end (e.g. telemetry_at_end.cpu.percent).",
    "When asked for a single best or worst row, sort on the relevant field and set limit to 1.",
    "Filter abnormal tasks with the anomalous flag.",
    "Count tasks with count(*) unless the question names a specific field.",
)


class ContextManager:
    """Single-writer holder of the buffer, schema, guidelines, and anomaly feed."""

    def __init__(
        self,
        capacity: int = DEFAULT_BUFFER_CAPACITY,
        static_guidelines: tuple[str, ...] = STATIC_GUIDELINES,
        anomaly_feed_capacity: int = 1000,
    ):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self._buffer: deque[TaskRecord] = deque(maxlen=capacity)
        self._schema = DataflowSchema()
        self._guidelines: list[Guideline] = []
        self._anomaly_feed: deque[TaskRecord] = deque(maxlen=anomaly_feed_capacity)
        self._lock = threading.RLock()
        self._ingested = 0
        self._guideline_seq = 0
        self._threads: list[threading.Thread] = []
        self._subs = []
        self._stopping = False
        for text in static_guidelines:
            self.add_guideline(text, origin="static")

    # -- ingestion -------------------------------------------------------

    def ingest(self, record: TaskRecord) -> dict:
        """Feed one record; only type=task contributes to buffer and schema."""
        with self._lock:
            if record.type == "task":
                self._buffer.append(record)
                self._update_schema(record)
                self._ingested += 1
            elif record.type == "anomaly":
                self._anomaly_feed.append(record)
            return {
                "ingested": self._ingested,
                "buffer_size": len(self._buffer),
                "activities": len(self._schema.activities),
            }

    def _update_schema(self, record: TaskRecord) -> None:
        activity = self._schema.activities.get(record.activity_id)
        if activity is None:
            activity = ActivitySchema(activity_id=record.activity_id)
            self._schema.activities[record.activity_id] = activity
        activity.task_count += 1
        for role, doc in (("inputs", record.used), ("outputs", record.generated)):
            specs = getattr(activity, role)
            for path, type_name, example, length in flatten_payload(doc):
                spec = specs.get(path)
                if spec is None:
                    spec = FieldSpec(path=path)
                    specs[path] = spec
                spec.observe(type_name, example, length)

    # -- reads -----------------------------------------------------------

    def schema_snapshot(self) -> DataflowSchema:
        with self._lock:
            return copy.deepcopy(self._schema)

    def buffer_view(self) -> list[TaskRecord]:
        """Point-in-time snapshot, oldest to newest."""
        with self._lock:
            return list(self._buffer)

    def anomalies(self, limit: int = 50) -> list[TaskRecord]:
        """Most recent anomaly records, newest first."""
        with self._lock:
            feed = list(self._anomaly_feed)
        return list(reversed(feed))[:limit]

    def stats(self) -> dict:
        with self._lock:
            return {
                "ingested": self._ingested,
                "buffer_size": len(self._buffer),
                "buffer_capacity": self._buffer.maxlen,
                "activities": len(self._schema.activities),
                "guidelines": len(self._guidelines),
                "anomalies": len(self._anomaly_feed),
            }

    # -- guidelines ------------------------------------------------------

    def add_guideline(self, text: str, origin: str = "user") -> Guideline:
        if not text or not text.strip():
            raise ValueError("guideline text must be non-empty")
        if origin not in ("static", "user"):
            raise ValueError(f"origin must be static or user, got {origin!r}")
        with self._lock:
            self._guideline_seq += 1
            guideline = Guideline(
                id=f"g-{self._guideline_seq:04d}",
                text=text.strip(),
                origin=origin,
                added_at=time.time(),
            )
            self._guidelines.append(guideline)
            return guideline

    def guidelines(self) -> list[Guideline]:
        """Ordered: static entries first, then user entries in add order."""
        with self._lock:
            entries = list(self._guidelines)
        return [g for g in entries if g.origin == "static"] + [
            g for g in entries if g.origin == "user"
        ]

    # -- anomaly markers ---------------------------------------------------

    def mark_anomaly(self, task_id: str, info: dict) -> bool:
        """Tag the buffered copy of a task; the persisted original is untouched."""
        with self._lock:
            for idx, record in enumerate(self._buffer):
                if record.task_id == task_id:
                    marked = copy.deepcopy(record)
                    tags = list(marked.extras.get("anomaly", []))
                    tags.append(info)
                    marked.extras = dict(marked.extras)
                    marked.extras["anomalous"] = True
                    marked.extras["anomaly"] = tags
                    self._buffer[idx] = marked
                    return True
        return False

    # -- hub attachment ----------------------------------------------------

    def attach(self, hub: Hub, topics: tuple[str, ...] = ("tasks", "anomalies")) -> None:
        """Subscribe to hub topics and ingest in background threads."""
        for topic in topics:
            sub = hub.subscribe(topic)
            self._subs.append(sub)
            thread = threading.Thread(target=self._pump, args=(sub,), daemon=True)
            thread.start()
            self._threads.append(thread)

    def _pump(self, sub) -> None:
        while not self._stopping:
            try:
                record = sub.receive(timeout=0.2)
            except EOFError:
                return
            if record is not None:
                self.ingest(record)

    def detach(self) -> None:
        self._stopping = True
        for sub in self._subs:
            sub.close()
        for thread in self._threads:
            thread.join(timeout=5)
        self._subs.clear()
        self._threads.clear()
        self._stopping = False
