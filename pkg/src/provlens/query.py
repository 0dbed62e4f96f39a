"""Structured queries over task records.

A QueryIR is the serializable query the agent emits instead of executable
code: filters, projections, grouping, aggregations, sort, limit, and an
optional plot request. ``execute`` runs it against any iterable of
TaskRecords (live buffer or persistent store) with fixed semantics:

* records flatten to dotted paths ("generated.bd_energy"); a bare path
  falls back to the exact key, then generated.<path>, then used.<path>
* filter: AND of predicates; a missing path is null and null fails every
  predicate
* group/aggregate: group keys in first-seen order; count counts non-null
  values unless the path is "*"; sum/mean/std require numeric values and
  skip nulls (std is the sample formula, null when fewer than 2 values);
  min/max accept all-numeric or all-string values; empty input yields null
* project: explicit paths, or for plain record queries every observed
  path in first-seen order
* sort: stable, nulls always last, final tiebreaker task_id (records) or
  the group key tuple (grouped rows); evaluated before projection trims
  columns so group keys may order a projection that drops them
* limit: plain prefix
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

from .context import DataflowSchema

FILTER_OPS = ("eq", "ne", "lt", "le", "gt", "ge", "contains", "in", "regex")
AGG_FNS = ("count", "sum", "mean", "min", "max", "std")
PLOT_KINDS = ("bar", "line", "scatter")
SOURCES = ("buffer", "store")

_OP_TOKENS = {
    "eq": "=",
    "ne": "!=",
    "lt": "<",
    "le": "<=",
    "gt": ">",
    "ge": ">=",
    "contains": "CONTAINS",
    "in": "IN",
    "regex": "MATCHES",
}
_TOKEN_OPS = {v: k for k, v in _OP_TOKENS.items()}


class InvalidQueryError(ValueError):
    """The query document violates a structural invariant."""


class QueryExecutionError(RuntimeError):
    """Execution failed; names the offending path and function."""

    def __init__(self, path: str, fn: str, message: str):
        super().__init__(f"{fn}({path}): {message}")
        self.path = path
        self.fn = fn


@dataclass(frozen=True)
class Filter:
    path: str
    op: str
    value: object

    def __post_init__(self):
        if self.op not in FILTER_OPS:
            raise InvalidQueryError(f"unknown filter op {self.op!r}")
        if self.op == "regex":
            if not isinstance(self.value, str):
                raise InvalidQueryError("regex literal must be a string")
            try:
                re.compile(self.value)
            except re.error as exc:
                raise InvalidQueryError(f"regex does not compile: {exc}")
        if self.op == "in" and not isinstance(self.value, list):
            raise InvalidQueryError("in literal must be a list")


@dataclass(frozen=True)
class Aggregation:
    path: str
    fn: str
    alias: str

    def __post_init__(self):
        if self.fn not in AGG_FNS:
            raise InvalidQueryError(f"unknown aggregation fn {self.fn!r}")
        if not self.alias:
            raise InvalidQueryError("aggregation alias must be non-empty")


@dataclass(frozen=True)
class SortKey:
    key: str
    direction: str = "asc"

    def __post_init__(self):
        if self.direction not in ("asc", "desc"):
            raise InvalidQueryError(f"sort direction must be asc or desc, got {self.direction!r}")


@dataclass(frozen=True)
class PlotSpec:
    kind: str
    x: str
    y: str
    title: str = ""

    def __post_init__(self):
        if self.kind not in PLOT_KINDS:
            raise InvalidQueryError(f"unknown plot kind {self.kind!r}")
        if self.x == self.y:
            raise InvalidQueryError("plot x and y must differ")


@dataclass(frozen=True)
class QueryIR:
    source: str = "buffer"
    filters: tuple[Filter, ...] = ()
    projections: tuple[str, ...] = ()
    group_by: tuple[str, ...] = ()
    aggregations: tuple[Aggregation, ...] = ()
    sort: tuple[SortKey, ...] = ()
    limit: int | None = None
    plot: PlotSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "projections", tuple(self.projections))
        object.__setattr__(self, "group_by", tuple(self.group_by))
        object.__setattr__(self, "aggregations", tuple(self.aggregations))
        object.__setattr__(self, "sort", tuple(self.sort))
        if self.source not in SOURCES:
            raise InvalidQueryError(f"source must be buffer or store, got {self.source!r}")
        if self.group_by and not self.aggregations:
            raise InvalidQueryError("group_by requires at least one aggregation")
        if self.limit is not None and self.limit < 0:
            raise InvalidQueryError("limit must be >= 0")
        aliases = {a.alias for a in self.aggregations}
        if self.aggregations and not self.group_by:
            allowed = aliases
        elif self.group_by:
            allowed = aliases | set(self.group_by) | set(self.projections)
        elif self.projections:
            allowed = set(self.projections) | aliases
        else:
            allowed = None  # select-all: any path may sort
        if allowed is not None:
            for key in self.sort:
                if key.key not in allowed:
                    raise InvalidQueryError(
                        f"sort key {key.key!r} is not a projected path, alias, or group key"
                    )

    def to_doc(self) -> dict:
        doc: dict = {"source": self.source}
        if self.filters:
            doc["filters"] = [[f.path, f.op, f.value] for f in self.filters]
        if self.projections:
            doc["projections"] = list(self.projections)
        if self.group_by:
            doc["group_by"] = list(self.group_by)
        if self.aggregations:
            doc["aggregations"] = [[a.path, a.fn, a.alias] for a in self.aggregations]
        if self.sort:
            doc["sort"] = [[s.key, s.direction] for s in self.sort]
        if self.limit is not None:
            doc["limit"] = self.limit
        if self.plot is not None:
            doc["plot"] = {
                "kind": self.plot.kind,
                "x": self.plot.x,
                "y": self.plot.y,
                "title": self.plot.title,
            }
        return doc


def parse_ir_doc(doc: dict) -> QueryIR:
    """Build a QueryIR from a plain JSON document (the agent's output format)."""
    if not isinstance(doc, dict):
        raise InvalidQueryError("query document must be a JSON object")

    def triple(entry, names):
        if isinstance(entry, dict):
            return [entry.get(n) for n in names]
        if isinstance(entry, (list, tuple)):
            return list(entry) + [None] * (len(names) - len(entry))
        raise InvalidQueryError(f"bad entry {entry!r}")

    filters = []
    for entry in doc.get("filters", []):
        path, op, value = triple(entry, ("path", "op", "value"))
        filters.append(Filter(str(path), str(op), value))
    aggregations = []
    for entry in doc.get("aggregations", []):
        path, fn, alias = triple(entry, ("path", "fn", "alias"))
        if alias is None:
            alias = f"{fn}_{str(path).split('.')[-1].strip('*') or 'all'}".strip("_")
        aggregations.append(Aggregation(str(path), str(fn), str(alias)))
    sort = []
    for entry in doc.get("sort", []):
        key, direction = triple(entry, ("key", "direction"))
        sort.append(SortKey(str(key), str(direction or "asc")))
    plot = None
    if doc.get("plot"):
        p = doc["plot"]
        plot = PlotSpec(
            kind=str(p.get("kind", "bar")),
            x=str(p.get("x", "")),
            y=str(p.get("y", "")),
            title=str(p.get("title", "")),
        )
    limit = doc.get("limit")
    if limit is not None:
        if isinstance(limit, bool) or not isinstance(limit, int):
            raise InvalidQueryError("limit must be an integer")
    return QueryIR(
        source=doc.get("source", "buffer"),
        filters=tuple(filters),
        projections=tuple(str(p) for p in doc.get("projections", [])),
        group_by=tuple(str(g) for g in doc.get("group_by", [])),
        aggregations=tuple(aggregations),
        sort=tuple(sort),
        limit=limit,
        plot=plot,
    )


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[tuple]

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def to_doc(self) -> dict:
        return {"columns": self.columns, "rows": [list(r) for r in self.rows],
                "row_count": self.row_count}

    def column(self, name: str) -> list:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]


# --- record flattening --------------------------------------------------------

_DOC_FIELDS = ("used", "generated", "telemetry_at_start", "telemetry_at_end")


def flatten_record(record) -> dict:
    """Dotted-path view of one record, in canonical field order.

    Nested documents flatten to dotted paths; lists stay whole at their path.
    """
    flat: dict = {}
    for key, value in record.to_doc().items():
        if isinstance(value, dict):
            _flatten_into(flat, key, value)
        else:
            flat[key] = value
    return flat


def _flatten_into(flat: dict, prefix: str, doc: dict) -> None:
    for key, value in doc.items():
        path = f"{prefix}.{key}"
        if isinstance(value, dict):
            _flatten_into(flat, path, value)
        else:
            flat[path] = value


def resolve_path(flat: dict, path: str):
    """Exact key first, then generated.<path>, then used.<path>."""
    if path in flat:
        return flat[path]
    value = flat.get(f"generated.{path}")
    if value is not None:
        return value
    return flat.get(f"used.{path}")


# --- validation ---------------------------------------------------------------

@dataclass
class ValidationReport:
    findings: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings

    def add(self, kind: str, path: str, detail: str) -> None:
        self.findings.append({"kind": kind, "path": path, "detail": detail})

    def to_doc(self) -> list[dict]:
        return list(self.findings)


_NUMERIC_TYPES = {"int", "float"}


def _schema_types(schema: DataflowSchema, path: str) -> set[str]:
    """Inferred types of every schema field a query path could refer to."""
    bare = path
    for prefix in ("used.", "generated."):
        if path.startswith(prefix):
            bare = path[len(prefix):]
            break
    roles = ("used", "generated")
    if path.startswith("used."):
        roles = ("used",)
    elif path.startswith("generated."):
        roles = ("generated",)
    types = set()
    for activity in schema.activities.values():
        for role in roles:
            specs = activity.inputs if role == "used" else activity.outputs
            for candidate in (bare, f"{bare}[]"):
                spec = specs.get(candidate)
                if spec is not None and spec.inferred_type:
                    types.add(spec.inferred_type)
    return types


def path_resolves(schema: DataflowSchema, path: str) -> bool:
    if path in schema.common_fields:
        return True
    if path.startswith("telemetry_at_start.") or path.startswith("telemetry_at_end."):
        return True
    return bool(_schema_types(schema, path))


def validate(ir: QueryIR, schema: DataflowSchema) -> ValidationReport:
    """Check every referenced path against the schema; report, don't raise."""
    report = ValidationReport()
    aliases = {a.alias for a in ir.aggregations}
    referenced: list[tuple[str, str]] = [(f.path, "filter") for f in ir.filters]
    referenced += [(p, "projection") for p in ir.projections]
    referenced += [(g, "group key") for g in ir.group_by]
    for agg in ir.aggregations:
        if agg.path != "*":
            referenced.append((agg.path, f"aggregation {agg.fn}"))
    for key in ir.sort:
        if key.key not in aliases and key.key not in ir.group_by:
            referenced.append((key.key, "sort key"))
    if ir.plot:
        for axis, name in (("x", ir.plot.x), ("y", ir.plot.y)):
            if name not in aliases and name not in ir.group_by and name not in ir.projections:
                referenced.append((name, f"plot {axis} axis"))
    for path, where in referenced:
        if not path_resolves(schema, path):
            report.add("unresolved_path", path, f"{where} references a field not in the schema")
    for agg in ir.aggregations:
        if agg.fn in ("sum", "mean", "std") and agg.path != "*":
            types = _schema_types(schema, agg.path)
            if not types and agg.path in ("started_at", "ended_at"):
                continue
            if agg.path.startswith("telemetry_at_"):
                continue
            if types and not (types & _NUMERIC_TYPES):
                report.add(
                    "type_mismatch",
                    agg.path,
                    f"{agg.fn} needs numeric values but schema shows {sorted(types)}",
                )
            if not types and agg.path in schema.common_fields and agg.path not in (
                "started_at", "ended_at",
            ):
                report.add("type_mismatch", agg.path, f"{agg.fn} over non-numeric common field")
    return report


# --- execution ------------------------------------------------------------

def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _matches(value, op: str, literal) -> bool:
    if value is None:
        return False
    if op == "eq":
        return value == literal
    if op == "ne":
        return value != literal
    if op in ("lt", "le", "gt", "ge"):
        if _is_number(value) and _is_number(literal):
            pass
        elif isinstance(value, str) and isinstance(literal, str):
            pass
        else:
            return False
        if op == "lt":
            return value < literal
        if op == "le":
            return value <= literal
        if op == "gt":
            return value > literal
        return value >= literal
    if op == "contains":
        if isinstance(value, str):
            return isinstance(literal, str) and literal in value
        if isinstance(value, list):
            return literal in value
        return False
    if op == "in":
        return isinstance(literal, list) and value in literal
    if op == "regex":
        return isinstance(value, str) and re.search(literal, value) is not None
    raise InvalidQueryError(f"unknown filter op {op!r}")


def _aggregate(fn: str, path: str, values: list) -> object:
    present = [v for v in values if v is not None]
    if fn == "count":
        return len(present)
    if fn in ("sum", "mean", "std"):
        for v in present:
            if not _is_number(v):
                raise QueryExecutionError(path, fn, f"non-numeric value {v!r}")
        if not present:
            return None
        if fn == "sum":
            return sum(present)
        if fn == "mean":
            return sum(present) / len(present)
        if len(present) < 2:
            return None
        # sample std, two-pass float formula, left-to-right sums
        mean = sum(present) / len(present)
        acc = 0.0
        for v in present:
            d = v - mean
            acc += d * d
        return math.sqrt(acc / (len(present) - 1))
    if fn in ("min", "max"):
        if not present:
            return None
        numeric = all(_is_number(v) for v in present)
        stringy = all(isinstance(v, str) for v in present)
        if not (numeric or stringy):
            raise QueryExecutionError(path, fn, "values are not mutually comparable")
        return min(present) if fn == "min" else max(present)
    raise InvalidQueryError(f"unknown aggregation fn {fn!r}")


def _group_key_part(value):
    try:
        hash(value)
        return value
    except TypeError:
        return json.dumps(value, sort_keys=True, default=str)


def _sort_token(value):
    if isinstance(value, bool):
        return (0, float(value))
    if _is_number(value):
        return (0, float(value))
    if isinstance(value, str):
        return (1, value)
    return (2, json.dumps(value, sort_keys=True, default=str))


def _apply_sort(rows: list[dict], sort: tuple[SortKey, ...], tiebreak: str | None) -> list[dict]:
    out = list(rows)
    if not sort:
        return out  # unsorted queries keep data order
    if tiebreak:
        out.sort(key=lambda r: _sort_token(r.get(tiebreak)))
    for key in reversed(sort):
        if key.direction == "asc":
            out.sort(key=lambda r, k=key.key: (r.get(k) is None, _sort_token(r.get(k))))
        else:
            out.sort(key=lambda r, k=key.key: (r.get(k) is not None, _sort_token(r.get(k))),
                     reverse=True)
    return out


def execute(ir: QueryIR, records) -> ResultTable:
    """Run a query over an iterable of TaskRecords; see module docstring."""
    flats = [flatten_record(r) for r in records]
    kept = [
        f for f in flats
        if all(_matches(resolve_path(f, flt.path), flt.op, flt.value) for flt in ir.filters)
    ]

    if ir.aggregations:
        group_rows: list[dict] = []
        if ir.group_by:
            groups: dict[tuple, list[dict]] = {}
            order: list[tuple] = []
            display: dict[tuple, tuple] = {}
            for f in kept:
                values = tuple(resolve_path(f, g) for g in ir.group_by)
                key = tuple(_group_key_part(v) for v in values)
                if key not in groups:
                    groups[key] = []
                    order.append(key)
                    display[key] = tuple(_group_key_part(v) for v in values)
                groups[key].append(f)
            for key in order:
                row = dict(zip(ir.group_by, display[key]))
                members = groups[key]
                for agg in ir.aggregations:
                    values = (
                        [1] * len(members)
                        if agg.path == "*"
                        else [resolve_path(f, agg.path) for f in members]
                    )
                    if agg.path == "*" and agg.fn == "count":
                        row[agg.alias] = len(members)
                    else:
                        row[agg.alias] = _aggregate(agg.fn, agg.path, values)
                group_rows.append(row)
            columns = [c for c in (*ir.group_by, *(a.alias for a in ir.aggregations))]
            tiebreak = None
        else:
            row = {}
            for agg in ir.aggregations:
                if agg.path == "*" and agg.fn == "count":
                    row[agg.alias] = len(kept)
                else:
                    values = [resolve_path(f, agg.path) for f in kept]
                    row[agg.alias] = _aggregate(agg.fn, agg.path, values)
            group_rows = [row]
            columns = [a.alias for a in ir.aggregations]
            tiebreak = None
        rows = _apply_sort(group_rows, ir.sort, tiebreak)
        if ir.projections:
            columns = [c for c in ir.projections if c in columns] or columns
    else:
        rows = _apply_sort(kept, ir.sort, tiebreak="task_id")
        if ir.projections:
            columns = list(ir.projections)
            rows = [{c: resolve_path(f, c) for c in columns} for f in rows]
        else:
            columns = []
            seen = set()
            for f in rows:
                for key in f:
                    if key not in seen:
                        seen.add(key)
                        columns.append(key)

    if ir.limit is not None:
        rows = rows[: ir.limit]
    return ResultTable(columns=columns, rows=[tuple(r.get(c) for c in columns) for r in rows])


# --- text form ------------------------------------------------------------

_PATH_RE = r"[A-Za-z_*][A-Za-z0-9_.\[\]]*"


def render_ir(ir: QueryIR) -> str:
    """Deterministic one-line text form; parse_ir reads it back."""
    items = []
    items.extend(ir.projections)
    for agg in ir.aggregations:
        items.append(f"{agg.fn}({agg.path}) AS {agg.alias}")
    select = ", ".join(items) if items else "*"
    parts = [f"SELECT {select} FROM {ir.source}"]
    if ir.filters:
        clauses = [
            f"{f.path} {_OP_TOKENS[f.op]} {json.dumps(f.value, ensure_ascii=False)}"
            for f in ir.filters
        ]
        parts.append("WHERE " + " AND ".join(clauses))
    if ir.group_by:
        parts.append("GROUP BY " + ", ".join(ir.group_by))
    if ir.sort:
        parts.append(
            "SORT BY " + ", ".join(f"{s.key} {s.direction.upper()}" for s in ir.sort)
        )
    if ir.limit is not None:
        parts.append(f"LIMIT {ir.limit}")
    if ir.plot:
        plot = f"PLOT {ir.plot.kind} X={ir.plot.x} Y={ir.plot.y}"
        if ir.plot.title:
            plot += f" TITLE {json.dumps(ir.plot.title, ensure_ascii=False)}"
        parts.append(plot)
    return " ".join(parts)


class _TextParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \t\n":
            self.pos += 1

    def keyword(self, *words: str) -> bool:
        self.skip_ws()
        for word in words:
            end = self.pos + len(word)
            if self.text[self.pos:end].upper() == word and (
                end >= len(self.text) or not self.text[end].isalnum()
            ):
                self.pos = end
                return True
        return False

    def expect_keyword(self, *words: str):
        if not self.keyword(*words):
            raise InvalidQueryError(
                f"expected {' or '.join(words)} at {self.text[self.pos:self.pos+20]!r}"
            )

    def path(self) -> str:
        self.skip_ws()
        match = re.match(_PATH_RE, self.text[self.pos:])
        if not match:
            raise InvalidQueryError(f"expected a path at {self.text[self.pos:self.pos+20]!r}")
        self.pos += match.end()
        return match.group(0)

    def literal(self):
        self.skip_ws()
        try:
            value, consumed = json.JSONDecoder().raw_decode(self.text[self.pos:])
        except json.JSONDecodeError as exc:
            raise InvalidQueryError(f"bad literal at {self.text[self.pos:self.pos+20]!r}: {exc}")
        self.pos += consumed
        return value

    def done(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)


def parse_ir(text: str) -> QueryIR:
    """Parse the rendered text form back into a QueryIR."""
    p = _TextParser(text.strip())
    p.expect_keyword("SELECT")
    projections: list[str] = []
    aggregations: list[Aggregation] = []
    p.skip_ws()
    if p.text[p.pos:p.pos + 1] == "*":
        p.pos += 1
    else:
        while True:
            item = p.path()
            p.skip_ws()
            if p.text[p.pos:p.pos + 1] == "(":
                fn = item
                p.pos += 1
                inner = "*" if p.keyword("*") else p.path()
                p.skip_ws()
                if p.text[p.pos:p.pos + 1] != ")":
                    raise InvalidQueryError("expected ) in aggregation")
                p.pos += 1
                p.expect_keyword("AS")
                alias = p.path()
                aggregations.append(Aggregation(inner, fn, alias))
            else:
                projections.append(item)
            p.skip_ws()
            if p.text[p.pos:p.pos + 1] == ",":
                p.pos += 1
                continue
            break
    p.expect_keyword("FROM")
    source = p.path()
    filters: list[Filter] = []
    if p.keyword("WHERE"):
        while True:
            path = p.path()
            p.skip_ws()
            op_token = None
            for token in ("CONTAINS", "IN", "MATCHES", "!=", "<=", ">=", "=", "<", ">"):
                probe = p.text[p.pos:p.pos + len(token)]
                if (probe.upper() if token.isalpha() else probe) == token:
                    op_token = token
                    p.pos += len(token)
                    break
            if op_token is None:
                raise InvalidQueryError(f"expected an operator at {p.text[p.pos:p.pos+10]!r}")
            filters.append(Filter(path, _TOKEN_OPS[op_token], p.literal()))
            if not p.keyword("AND"):
                break
    group_by: list[str] = []
    if p.keyword("GROUP"):
        p.expect_keyword("BY")
        group_by.append(p.path())
        p.skip_ws()
        while p.text[p.pos:p.pos + 1] == ",":
            p.pos += 1
            group_by.append(p.path())
            p.skip_ws()
    sort: list[SortKey] = []
    if p.keyword("SORT"):
        p.expect_keyword("BY")
        while True:
            key = p.path()
            direction = "asc"
            if p.keyword("ASC"):
                direction = "asc"
            elif p.keyword("DESC"):
                direction = "desc"
            sort.append(SortKey(key, direction))
            p.skip_ws()
            if p.text[p.pos:p.pos + 1] == ",":
                p.pos += 1
                continue
            break
    limit = None
    if p.keyword("LIMIT"):
        value = p.literal()
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidQueryError("limit must be an integer")
        limit = value
    plot = None
    if p.keyword("PLOT"):
        kind = p.path()
        p.skip_ws()
        axes = {}
        title = ""
        while not p.done():
            tag = p.path()
            p.skip_ws()
            if tag.upper() in ("X", "Y") and p.text[p.pos:p.pos + 1] == "=":
                p.pos += 1
                axes[tag.lower()] = p.path()
            elif tag.upper() == "TITLE":
                title = p.literal()
            else:
                raise InvalidQueryError(f"unexpected plot token {tag!r}")
            p.skip_ws()
        plot = PlotSpec(kind=kind, x=axes.get("x", ""), y=axes.get("y", ""), title=title)
    if not p.done():
        raise InvalidQueryError(f"trailing text {p.text[p.pos:p.pos+20]!r}")
    return QueryIR(
        source=source,
        filters=tuple(filters),
        projections=tuple(projections),
        group_by=tuple(group_by),
        aggregations=tuple(aggregations),
        sort=tuple(sort),
        limit=limit,
        plot=plot,
    )
