"""Provenance data model: task records, query-class taxonomy, canonical JSONL form.

A task record describes one executed unit of work: what it used, what it
generated, when and where it ran, and how it relates to other records
(``was_informed_by``, ``was_associated_with``). Records serialize to a
single JSON line with a fixed key order so that logs diff cleanly and
fixtures are byte-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

STATUSES = frozenset({"SUBMITTED", "RUNNING", "FINISHED", "ERROR"})
RECORD_TYPES = frozenset({"task", "llm_interaction", "anomaly", "agent"})

NATURES = frozenset({"prospective", "retrospective"})
MODES = frozenset({"online", "offline"})
WORKLOADS = frozenset({"OLAP", "OLTP"})
DATA_TYPES = frozenset({"control_flow", "dataflow", "telemetry", "scheduling"})

# Canonical key order of the serialized record. Optional keys are emitted
# only when set; unknown keys captured at parse time are re-emitted after
# these, sorted by name.
_FIELD_ORDER = (
    "task_id",
    "campaign_id",
    "workflow_id",
    "activity_id",
    "used",
    "generated",
    "started_at",
    "ended_at",
    "hostname",
    "telemetry_at_start",
    "telemetry_at_end",
    "status",
    "type",
    "was_informed_by",
    "was_associated_with",
)


class RecordValidationError(ValueError):
    """A record violates an invariant. ``field`` names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class RecordParseError(ValueError):
    """Input text is not a well-formed record. ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int = 0, line: int | None = None):
        where = f" at offset {offset}" if line is None else f" at line {line}, offset {offset}"
        super().__init__(message + where)
        self.offset = offset
        self.line = line


def _check_payload(field_name: str, value, path: str = "") -> None:
    # used/generated may hold scalars, nested documents, and arrays thereof;
    # null is not a legal payload value.
    where = f"{field_name}{path}" if path else field_name
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(k, str):
                raise RecordValidationError(where, f"non-string key {k!r}")
            _check_payload(field_name, v, f"{path}.{k}")
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _check_payload(field_name, v, f"{path}[{i}]")
    elif value is None or not isinstance(value, (bool, int, float, str)):
        raise RecordValidationError(where, f"unsupported value {value!r}")


@dataclass
class TaskRecord:
    """One workflow-task provenance message.

    ``used`` holds the task inputs and ``generated`` the outputs, both as
    nested documents of scalars, documents, and arrays. ``extras`` keeps
    unknown top-level fields seen at parse time so records round-trip.
    """

    task_id: str
    activity_id: str
    campaign_id: str = ""
    workflow_id: str = ""
    used: dict = field(default_factory=dict)
    generated: dict = field(default_factory=dict)
    started_at: float | None = None
    ended_at: float | None = None
    hostname: str | None = None
    telemetry_at_start: dict | None = None
    telemetry_at_end: dict | None = None
    status: str = "SUBMITTED"
    type: str = "task"
    was_informed_by: list[str] | None = None
    was_associated_with: str | None = None
    extras: dict = field(default_factory=dict)

    def validate(self) -> "TaskRecord":
        if not self.task_id or not isinstance(self.task_id, str):
            raise RecordValidationError("task_id", "must be a non-empty string")
        if not self.activity_id or not isinstance(self.activity_id, str):
            raise RecordValidationError("activity_id", "must be a non-empty string")
        if self.status not in STATUSES:
            raise RecordValidationError("status", f"{self.status!r} not in {sorted(STATUSES)}")
        if self.type not in RECORD_TYPES:
            raise RecordValidationError("type", f"{self.type!r} not in {sorted(RECORD_TYPES)}")
        if (
            self.started_at is not None
            and self.ended_at is not None
            and self.ended_at < self.started_at
        ):
            raise RecordValidationError(
                "ended_at", f"{self.ended_at} earlier than started_at {self.started_at}"
            )
        _check_payload("used", self.used)
        _check_payload("generated", self.generated)
        if self.telemetry_at_start is not None:
            _check_payload("telemetry_at_start", self.telemetry_at_start)
        if self.telemetry_at_end is not None:
            _check_payload("telemetry_at_end", self.telemetry_at_end)
        if self.was_informed_by is not None:
            if not isinstance(self.was_informed_by, list) or not all(
                isinstance(t, str) for t in self.was_informed_by
            ):
                raise RecordValidationError("was_informed_by", "must be a list of task ids")
        return self

    def to_doc(self) -> dict:
        """Plain-dict form with canonical key order."""
        doc: dict = {}
        for name in _FIELD_ORDER:
            value = getattr(self, name)
            if value is None:
                continue
            doc[name] = value
        for name in sorted(self.extras):
            doc[name] = self.extras[name]
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "TaskRecord":
        known = {name: doc[name] for name in _FIELD_ORDER if name in doc}
        extras = {k: v for k, v in doc.items() if k not in _FIELD_ORDER}
        record = cls(
            task_id=known.get("task_id", ""),
            activity_id=known.get("activity_id", ""),
            campaign_id=known.get("campaign_id", ""),
            workflow_id=known.get("workflow_id", ""),
            used=known.get("used", {}),
            generated=known.get("generated", {}),
            started_at=known.get("started_at"),
            ended_at=known.get("ended_at"),
            hostname=known.get("hostname"),
            telemetry_at_start=known.get("telemetry_at_start"),
            telemetry_at_end=known.get("telemetry_at_end"),
            status=known.get("status", "SUBMITTED"),
            type=known.get("type", "task"),
            was_informed_by=known.get("was_informed_by"),
            was_associated_with=known.get("was_associated_with"),
            extras=extras,
        )
        return record.validate()


def serialize_record(record: TaskRecord) -> str:
    """Canonical one-line JSON form of a validated record."""
    record.validate()
    return json.dumps(record.to_doc(), separators=(",", ":"), ensure_ascii=False)


def parse_record(line: str, line_number: int | None = None) -> TaskRecord:
    """Parse one serialized record line back into a validated TaskRecord.

    Unknown top-level fields are preserved in ``extras``. Raises
    RecordParseError for malformed text (with byte offset) and
    RecordValidationError for invariant violations.
    """
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordParseError(exc.msg, offset=exc.pos, line=line_number) from exc
    if not isinstance(doc, dict):
        raise RecordParseError("expected a JSON object", offset=0, line=line_number)
    return TaskRecord.from_doc(doc)


@dataclass(frozen=True)
class QueryClass:
    """Position of a query in the provenance-query taxonomy.

    A query has one nature, one analysis mode, one workload style, and one
    or more provenance data types; each data type yields one taxonomy leaf.
    """

    nature: str
    mode: str
    workload: str
    data_types: frozenset[str]

    def __post_init__(self):
        if self.nature not in NATURES:
            raise ValueError(f"nature {self.nature!r} not in {sorted(NATURES)}")
        if self.mode not in MODES:
            raise ValueError(f"mode {self.mode!r} not in {sorted(MODES)}")
        if self.workload not in WORKLOADS:
            raise ValueError(f"workload {self.workload!r} not in {sorted(WORKLOADS)}")
        types = frozenset(self.data_types)
        if not types:
            raise ValueError("data_types must be non-empty")
        unknown = types - DATA_TYPES
        if unknown:
            raise ValueError(f"unknown data types {sorted(unknown)}")
        object.__setattr__(self, "data_types", types)


def classify_query_label(label: QueryClass) -> list[tuple[str, str, str, str]]:
    """Expand a QueryClass into its taxonomy leaves, one per data type."""
    return [
        (label.nature, label.mode, label.workload, dt) for dt in sorted(label.data_types)
    ]


def all_single_type_leaves() -> list[tuple[str, str, str, str]]:
    """Every (nature, mode, workload, data_type) leaf; 32 in total."""
    leaves = []
    for nature in sorted(NATURES):
        for mode in sorted(MODES):
            for workload in sorted(WORKLOADS):
                for dt in sorted(DATA_TYPES):
                    leaves.append((nature, mode, workload, dt))
    return leaves


@dataclass(frozen=True)
class AgentIdentity:
    """Identity under which agent actions are recorded."""

    agent_id: str
    name: str = ""

    def __post_init__(self):
        if not self.agent_id:
            raise ValueError("agent_id must be non-empty")
