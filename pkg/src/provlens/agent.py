"""The agent: routing, prompt assembly, LLM backends, and the answer pipeline.

Prompt context is assembled from up to seven cumulative configurations
(label "Nothing" ships only the user question; "Full" adds role/job, a
buffer description, the output contract, few-shot pairs, the inferred
dataflow schema, example field values, and query guidelines). The agent
asks the backend for one structured query document, validates it against
the schema, retries once with the validation findings, executes, and
answers with a text summary, table, or plot. Every tool run and LLM call
is itself recorded as provenance and published on the "agent" topic.

The bundled MockBackend is a deterministic stand-in for a real model: it
actually reads the schema and guideline sections out of the prompt, so
thinner configurations degrade its output the way they degrade a real
LLM's.
"""

from __future__ import annotations

import json
import math
import os
import re
import time
from dataclasses import dataclass, field

from .context import ContextManager, DataflowSchema, Guideline
from .hub import Hub
from .query import (
    InvalidQueryError,
    PlotSpec,
    QueryExecutionError,
    QueryIR,
    ResultTable,
    execute,
    parse_ir_doc,
    render_ir,
    validate,
)
from .records import AgentIdentity, TaskRecord

# --- prompt configurations ------------------------------------------------

_CONFIG_FLAGS = (
    "include_role_job",
    "include_buffer_description",
    "include_output_format",
    "include_few_shot",
    "include_schema",
    "include_domain_values",
    "include_guidelines",
)


@dataclass(frozen=True)
class PromptConfig:
    label: str
    include_role_job: bool = False
    include_buffer_description: bool = False
    include_output_format: bool = False
    include_few_shot: bool = False
    include_schema: bool = False
    include_domain_values: bool = False
    include_guidelines: bool = False

    def flags(self) -> tuple[bool, ...]:
        return tuple(getattr(self, f) for f in _CONFIG_FLAGS)


def _config(label: str, *on: str) -> PromptConfig:
    return PromptConfig(label=label, **{f: True for f in on})

_BASE = ("include_role_job", "include_buffer_description", "include_output_format")

PROMPT_CONFIGS: tuple[PromptConfig, ...] = (
    _config("Nothing"),
    _config("Baseline", *_BASE),
    _config("Baseline+FS", *_BASE, "include_few_shot"),
    _config("Baseline+FS+Schema", *_BASE, "include_few_shot", "include_schema"),
    _config(
        "Baseline+FS+Schema+Values",
        *_BASE, "include_few_shot", "include_schema", "include_domain_values",
    ),
    _config("Baseline+FS+Guidelines", *_BASE, "include_few_shot", "include_guidelines"),
    _config(
        "Full",
        *_BASE, "include_few_shot", "include_schema", "include_domain_values",
        "include_guidelines",
    ),
)

CONFIGS_BY_LABEL = {c.label: c for c in PROMPT_CONFIGS}
FULL_CONFIG = CONFIGS_BY_LABEL["Full"]


def config_from_label(label: str) -> PromptConfig:
    try:
        return CONFIGS_BY_LABEL[label]
    except KeyError:
        raise ValueError(f"unknown prompt config label {label!r}") from None


# --- prompt assembly --------------------------------------------------------

ROLE_SECTION = (
    "You are an expert in analyzing workflow provenance data. Your job is to "
    "turn the user's question into one structured query over the live buffer "
    "of task records."
)

BUFFER_DESCRIPTION_HEADER = (
    "Each buffered record describes one executed workflow task. Fields shared "
    "by every record:"
)

OUTPUT_FORMAT_SECTION = (
    "Respond with exactly one JSON object and no other text. Keys (all "
    'optional except "source"): "source" ("buffer" or "store"), "filters" '
    '(list of [path, op, value] with op one of eq, ne, lt, le, gt, ge, '
    'contains, in, regex), "projections" (list of paths), "group_by" (list '
    'of paths), "aggregations" (list of [path, fn, alias] with fn one of '
    'count, sum, mean, min, max, std; use path "*" to count rows), "sort" '
    '(list of [key, "asc"|"desc"]), "limit" (integer), and "plot" (object '
    'with kind, x, y, title). Reference task inputs as used.<field> and '
    "outputs as generated.<field>."
)

FEW_SHOT_BANK: tuple[tuple[str, dict], ...] = (
    (
        "How many tasks have failed so far?",
        {
            "source": "buffer",
            "filters": [["status", "eq", "ERROR"]],
            "aggregations": [["*", "count", "task_count"]],
        },
    ),
    (
        "What is the average sum produced by reduce tasks?",
        {
            "source": "buffer",
            "filters": [["activity_id", "eq", "reduce"]],
            "aggregations": [["generated.sum", "mean", "sum"]],
        },
    ),
    (
        "How many tasks ran on host h-01?",
        {
            "source": "buffer",
            "filters": [["hostname", "eq", "h-01"]],
            "aggregations": [["*", "count", "task_count"]],
        },
    ),
    (
        "What was the highest cpu percent at the end of a task?",
        {
            "source": "buffer",
            "projections": ["task_id", "telemetry_at_end.cpu.percent"],
            "sort": [["telemetry_at_end.cpu.percent", "desc"]],
            "limit": 1,
        },
    ),
)

GUIDELINE_OVERRIDE_SENTENCE = (
    "If a user-provided guideline conflicts with any earlier guideline, the "
    "user-provided one wins."
)

SECTION_ORDER = (
    "role",
    "buffer description",
    "output format",
    "few-shot examples",
    "dataflow schema",
    "example field values",
    "query guidelines",
    "user question",
)


@dataclass
class AssembledPrompt:
    sections: list[tuple[str, str]]
    token_estimate: int

    @property
    def text(self) -> str:
        return "\n\n".join(f"## {name}\n{body}" for name, body in self.sections)


def _buffer_description(schema: DataflowSchema) -> str:
    lines = [BUFFER_DESCRIPTION_HEADER]
    for name, description in schema.common_fields.items():
        lines.append(f"- {name}: {description}")
    lines.append(
        "- telemetry_at_start.cpu.percent / telemetry_at_end.cpu.percent: CPU utilization percent"
    )
    lines.append(
        "- telemetry_at_start.mem.percent / telemetry_at_end.mem.percent: memory utilization percent"
    )
    return "\n".join(lines)


def _schema_section(schema: DataflowSchema) -> str:
    lines = []
    for activity_id in sorted(schema.activities):
        activity = schema.activities[activity_id]
        lines.append(f"activity {activity_id} (tasks: {activity.task_count})")
        for role, specs in (("inputs", activity.inputs), ("outputs", activity.outputs)):
            if specs:
                rendered = ", ".join(
                    f"{path}:{specs[path].inferred_type}" for path in sorted(specs)
                )
                lines.append(f"  {role}: {rendered}")
    return "\n".join(lines) if lines else "(no activities observed yet)"


def _values_section(schema: DataflowSchema) -> str:
    lines = []
    for activity_id in sorted(schema.activities):
        activity = schema.activities[activity_id]
        for role, specs in (("used", activity.inputs), ("generated", activity.outputs)):
            for path in sorted(specs):
                spec = specs[path]
                if spec.examples:
                    shown = " | ".join(spec.examples)
                    lines.append(f"{activity_id}.{role}.{path}: {shown}")
    return "\n".join(lines) if lines else "(no example values yet)"


def _few_shot_section() -> str:
    blocks = []
    for question, doc in FEW_SHOT_BANK:
        blocks.append(f"Question: {question}\nQuery: {json.dumps(doc)}")
    return "\n\n".join(blocks)


def _guidelines_section(guidelines: list[Guideline]) -> str:
    ordered = [g for g in guidelines if g.origin == "static"] + [
        g for g in guidelines if g.origin == "user"
    ]
    lines = [f"{i + 1}. {g.text}" for i, g in enumerate(ordered)]
    if any(g.origin == "user" for g in ordered):
        lines.append(GUIDELINE_OVERRIDE_SENTENCE)
    return "\n".join(lines) if lines else "(none)"


def assemble_prompt(
    config: PromptConfig,
    schema: DataflowSchema,
    guidelines: list[Guideline],
    user_query: str,
    few_shot: bool | None = None,
) -> AssembledPrompt:
    """Build the prompt for one question under one configuration."""
    sections: list[tuple[str, str]] = []
    if config.include_role_job:
        sections.append(("role", ROLE_SECTION))
    if config.include_buffer_description:
        sections.append(("buffer description", _buffer_description(schema)))
    if config.include_output_format:
        sections.append(("output format", OUTPUT_FORMAT_SECTION))
    if config.include_few_shot if few_shot is None else few_shot:
        sections.append(("few-shot examples", _few_shot_section()))
    if config.include_schema:
        sections.append(("dataflow schema", _schema_section(schema)))
    if config.include_domain_values:
        sections.append(("example field values", _values_section(schema)))
    if config.include_guidelines:
        sections.append(("query guidelines", _guidelines_section(guidelines)))
    sections.append(("user question", user_query))
    prompt = AssembledPrompt(sections=sections, token_estimate=0)
    prompt.token_estimate = math.ceil(len(prompt.text.encode("utf-8")) / 4)
    return prompt


# --- intents and routing ------------------------------------------------------

INTENT_KINDS = (
    "greeting", "monitor_query", "historical_query", "plot_request",
    "guideline_add", "other",
)


@dataclass(frozen=True)
class Intent:
    kind: str
    note: str = ""

    def __post_init__(self):
        if self.kind not in INTENT_KINDS:
            raise ValueError(f"unknown intent kind {self.kind!r}")


_GREETINGS = {
    "hi", "hello", "hey", "yo", "greetings", "good morning", "good afternoon",
    "good evening", "howdy", "hi there", "hello there", "how are you",
}
_PLOT_VERBS = ("plot", "graph", "chart", "draw")
_HISTORY_WORDS = (
    "history", "historical", "stored", "past runs", "previous runs", "archive",
    "persisted", "database",
)

INTENT_PROMPT_MARKER = "Classify the user's intent"
SUMMARIZE_PROMPT_MARKER = "Summarize this query result"


def classify_intent_keywords(message: str) -> str:
    """Keyword table shared by the rule layer fallbacks and the mock backend."""
    lowered = message.lower()
    normalized = lowered.strip(" .!?,")
    if normalized in _GREETINGS or (
        normalized.split(" ")[0] in _GREETINGS and len(normalized.split(" ")) <= 3
    ):
        return "greeting"
    if any(v in lowered for v in _PLOT_VERBS):
        return "plot_request"
    if any(w in lowered for w in _HISTORY_WORDS):
        return "historical_query"
    if re.search(
        r"\b(which|what|how many|average|mean|max|maximum|min|minimum|highest|"
        r"lowest|largest|smallest|count|show|list|sum|total|earliest|latest|recent)\b",
        lowered,
    ):
        return "monitor_query"
    return "other"


class BackendError(RuntimeError):
    """The LLM backend could not produce a completion."""


def route(message: str, backend) -> Intent:
    """Rule layer first; one constrained LLM classification otherwise."""
    stripped = message.strip()
    lowered = stripped.lower().strip(".!?, ")
    if lowered in _GREETINGS or (
        lowered.split(" ")[0] in _GREETINGS and len(lowered.split(" ")) <= 3
    ):
        return Intent("greeting", note="rule")
    if stripped.lower().startswith("guideline:"):
        return Intent("guideline_add", note="rule")
    first_word = re.split(r"\W+", stripped.lower(), maxsplit=1)[0]
    if first_word in _PLOT_VERBS:
        return Intent("plot_request", note="rule")
    prompt = (
        f"{INTENT_PROMPT_MARKER} as exactly one of: greeting, monitor_query, "
        "historical_query, plot_request, guideline_add, other. Reply with the "
        f"label only.\nMessage: {stripped}"
    )
    try:
        response = backend.complete(prompt, temperature=0.0)
    except Exception as exc:
        return Intent("other", note=f"backend error: {exc}")
    token = response.strip().split()[0].strip(".,:") if response.strip() else ""
    if token in INTENT_KINDS:
        return Intent(token, note="llm")
    return Intent("other", note=f"unparseable classification {response!r}")


# --- backends -----------------------------------------------------------------

class HTTPBackend:
    """Chat-completions-compatible HTTP backend."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout_s: float = 30.0,
        retries: int = 1,
    ):
        self.name = model
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s
        self.retries = retries

    @classmethod
    def from_env(cls) -> "HTTPBackend":
        base_url = os.environ.get("PROVLENS_LLM_BASE_URL")
        model = os.environ.get("PROVLENS_LLM_MODEL")
        if not base_url or not model:
            raise BackendError(
                "PROVLENS_LLM_BASE_URL and PROVLENS_LLM_MODEL must be set for the http backend"
            )
        return cls(
            base_url=base_url,
            model=model,
            api_key=os.environ.get("PROVLENS_LLM_API_KEY"),
            timeout_s=float(os.environ.get("PROVLENS_LLM_TIMEOUT_S", "30")),
            retries=int(os.environ.get("PROVLENS_LLM_RETRIES", "1")),
        )

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        }
        last: Exception | None = None
        for _ in range(max(1, self.retries + 1)):
            try:
                response = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout_s,
                )
                response.raise_for_status()
                doc = response.json()
                return doc["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001 - every failure is retryable here
                last = exc
        raise BackendError(f"llm request failed: {last}")


# --- deterministic mock backend -------------------------------------------------

_STOPWORDS = {
    "a", "an", "the", "of", "at", "in", "on", "for", "and", "or", "with", "to",
    "is", "was", "were", "are", "did", "does", "do", "that", "this", "all",
    "what", "which", "who", "how", "many", "much", "per", "by", "each", "any",
    "so", "far", "me", "my", "it", "its", "their", "there", "been", "have",
    "has", "had",
}

_SYNONYMS = {
    "memory": "mem",
    "start": "started",
    "starting": "started",
    "starts": "started",
    "end": "end",
    "ends": "end",
    "ended": "end",
    "host": "hostname",
    "hosts": "hostname",
    "hostnames": "hostname",
    "machine": "hostname",
    "node": "hostname",
    "ids": "id",
}


def _norm_token(token: str) -> str:
    token = token.lower()
    token = _SYNONYMS.get(token, token)
    if len(token) > 3 and token.endswith("s") and not token.endswith("ss"):
        singular = token[:-1]
        token = _SYNONYMS.get(singular, singular)
    return token


def _tokens_of(text: str) -> list[str]:
    raw = re.findall(r"[A-Za-z0-9_.\-]+", text.lower())
    out = []
    for token in raw:
        parts = [token] + re.split(r"[._\-]", token)
        for part in parts:
            part = _norm_token(part)
            if part and part not in _STOPWORDS:
                out.append(part)
    return out


@dataclass(frozen=True)
class _KnownField:
    path: str
    kind: str  # numeric | string | other
    role: str  # generated | used | common | telemetry
    tokens: frozenset[str]


_ROLE_RANK = {"generated": 0, "used": 1, "common": 2, "telemetry": 3}


def _field_tokens(path: str) -> frozenset[str]:
    parts = re.split(r"[._\[\]]+", path)
    tokens = {p for p in ([path.lower()] + parts)}
    return frozenset(
        _norm_token(t) for t in tokens if t and _norm_token(t) not in _STOPWORDS
    )


_COMMON_FIELD_KINDS = {
    "task_id": "string", "campaign_id": "string", "workflow_id": "string",
    "activity_id": "string", "hostname": "string", "status": "string",
    "type": "string", "started_at": "numeric", "ended_at": "numeric",
    "was_informed_by": "other", "was_associated_with": "string",
    "anomalous": "other",
}


class MockBackend:
    """Deterministic LLM stand-in driven by the prompt's own sections.

    Intent prompts answer from a keyword table. Query prompts are parsed:
    the mock reads common fields from the buffer description, activity
    fields from the schema section, and time-sorting hints from the
    guidelines, then builds a query document by pattern rules. Prompts
    missing those sections degrade accordingly (no output-format section
    yields prose; no few-shot yields a bare select-all; unknown fields get
    guessed paths that fail validation).
    """

    def __init__(self, name: str = "mock"):
        self.name = name
        self.calls: list[tuple[str, float]] = []

    # -- prompt parsing helpers ------------------------------------------

    @staticmethod
    def _sections(prompt: str) -> dict[str, str]:
        sections = {}
        for match in re.finditer(r"^## ([^\n]+)\n(.*?)(?=\n## |\Z)", prompt, re.S | re.M):
            sections[match.group(1).strip()] = match.group(2).strip()
        return sections

    @staticmethod
    def _known_fields(sections: dict[str, str]) -> tuple[list[_KnownField], list[str]]:
        fields: list[_KnownField] = []
        activities: list[str] = []
        buffer_desc = sections.get("buffer description", "")
        if buffer_desc:
            for name, kind in _COMMON_FIELD_KINDS.items():
                if re.search(rf"- {re.escape(name)}:", buffer_desc):
                    fields.append(_KnownField(name, kind, "common", _field_tokens(name)))
            for match in re.finditer(r"(telemetry_at_\w+(?:\.\w+)+)", buffer_desc):
                path = match.group(1)
                fields.append(_KnownField(path, "numeric", "telemetry", _field_tokens(path)))
        schema_text = sections.get("dataflow schema", "")
        if schema_text:
            for line in schema_text.splitlines():
                activity_match = re.match(r"activity (\S+)", line)
                if activity_match:
                    activities.append(activity_match.group(1))
                    continue
                role_match = re.match(r"\s+(inputs|outputs): (.+)", line)
                if role_match:
                    role = "used" if role_match.group(1) == "inputs" else "generated"
                    for item in role_match.group(2).split(", "):
                        if ":" not in item:
                            continue
                        path, type_name = item.rsplit(":", 1)
                        kind = (
                            "numeric" if type_name in ("int", "float")
                            else "string" if type_name == "string"
                            else "other"
                        )
                        full = f"{role}.{path}"
                        fields.append(_KnownField(full, kind, role, _field_tokens(full)))
        # drop duplicates, keep first occurrence
        seen = set()
        unique = []
        for f in fields:
            if f.path not in seen:
                seen.add(f.path)
                unique.append(f)
        return unique, activities

    @staticmethod
    def _best_field(
        fields: list[_KnownField],
        query_tokens: list[str],
        kinds: tuple[str, ...] = ("numeric", "string", "other"),
    ) -> _KnownField | None:
        token_set = set(query_tokens)
        best: tuple | None = None
        best_field = None
        for f in fields:
            if f.kind not in kinds:
                continue
            score = len(f.tokens & token_set)
            if score < 1:
                continue
            rank = (-score, _ROLE_RANK[f.role], len(f.path), f.path)
            if best is None or rank < best:
                best = rank
                best_field = f
        return best_field

    # -- completion ---------------------------------------------------------

    def complete(self, prompt: str, temperature: float = 0.0) -> str:
        self.calls.append((prompt, temperature))
        if INTENT_PROMPT_MARKER in prompt:
            message = prompt.rsplit("Message:", 1)[-1].strip()
            return classify_intent_keywords(message)
        if SUMMARIZE_PROMPT_MARKER in prompt:
            count_match = re.search(r"Row count: (\d+)", prompt)
            rows = count_match.group(1) if count_match else "some"
            return f"The query matched {rows} row(s); see the table for details."
        sections = self._sections(prompt)
        question = sections.get("user question", prompt.splitlines()[-1]).strip()
        if "output format" not in sections:
            return (
                "I would need the query output contract to answer "
                f"{question!r}; here is a natural-language guess instead."
            )
        if "Validation feedback" in sections:
            return json.dumps({"source": "buffer"})  # fall back to select-all
        if "few-shot examples" not in sections:
            return json.dumps({"source": "buffer"})
        doc = self._build_query(question, sections)
        return json.dumps(doc)

    # -- pattern rules --------------------------------------------------------

    def _build_query(self, question: str, sections: dict[str, str]) -> dict:
        fields, activities = self._known_fields(sections)
        guidelines = sections.get("query guidelines", "")
        time_field = "started_at" if "started_at" in guidelines else "task_id"
        lowered = question.lower()
        tokens = _tokens_of(question)

        filters: list[list] = []
        group_by: list[str] = []
        aggregations: list[list] = []
        sort: list[list] = []
        projections: list[str] = []
        limit = None
        plot = None
        consumed: set[str] = set()

        def field_path(f: _KnownField | None) -> str | None:
            return f.path if f else None

        # activity filter: query token equals a known activity name
        for activity in activities:
            if re.search(rf"\b{re.escape(activity.lower())}\b", lowered):
                filters.append(["activity_id", "eq", activity])
                consumed.update(_tokens_of(activity))
                break

        # status filter from keywords
        if any(f.path == "status" for f in fields):
            for pattern, literal in (
                (r"\b(failed|failures|error|errored)\b", "ERROR"),
                (r"\b(finished|completed|succeeded|successfully)\b", "FINISHED"),
                (r"\brunning\b", "RUNNING"),
                (r"\bsubmitted\b", "SUBMITTED"),
            ):
                if re.search(pattern, lowered):
                    filters.append(["status", "eq", literal])
                    break

        # informed-by lineage, then plain task <id> lookup (not both for one id)
        informed = re.search(r"informed by\s+(?:task\s+)?['\"]?([\w.]+)['\"]?", question)
        informed_id = informed.group(1).rstrip(".") if informed else None
        if informed:
            filters.append(["was_informed_by", "contains", informed_id])
            # keep lineage phrasing away from the grouping rules below
            lowered = lowered[: informed.start()] + " " + lowered[informed.end():]
        task_match = re.search(r"\btask\s+([\w.]*\d[\w.]*_[\w.]*)", question)
        if task_match:
            task_id = task_match.group(1).rstrip(".")
            if task_id != informed_id:
                filters.append(["task_id", "eq", task_id])

        # host literal
        host_match = re.search(r"\bhost(?:name)?\s+['\"]?([\w-]*\d[\w.\-]*)['\"]?", question)
        if host_match and any(f.path == "hostname" for f in fields):
            filters.append(["hostname", "eq", host_match.group(1)])
            consumed.add("hostname")

        # contains filter over the best string field
        contains_match = re.search(r"\bcontain(?:s|ing)?\s+['\"]?([\w\-]+)['\"]?", question)
        if contains_match:
            literal = contains_match.group(1)
            target = self._best_field(
                fields, [t for t in tokens if t not in _tokens_of(literal)], kinds=("string",)
            )
            if target:
                filters.append([target.path, "contains", literal])
                consumed.update(target.tokens)

        # numeric comparators: "... above/below N"
        for pattern, op in (
            (r"(?:above|over|greater than|more than|at least|exceeding)\s+(-?[\d.]+)", "gt"),
            (r"(?:below|under|less than|fewer than|at most)\s+(-?[\d.]+)", "lt"),
        ):
            comp = re.search(pattern, lowered)
            if comp:
                raw_literal = comp.group(1).rstrip(".")
                literal = float(raw_literal) if "." in raw_literal else int(raw_literal)
                before = _tokens_of(lowered[: comp.start()])[-3:]
                target = self._best_field(fields, before, kinds=("numeric",))
                if target:
                    filters.append([target.path, op, literal])
                    consumed.update(target.tokens)

        # grouping
        group_match = re.search(
            r"(?:\bper\b|\bfor each\b|\bon each\b|\beach\b|\bgrouped by\b|\bby\b)\s+((?:[\w.]+\s*){1,2})",
            lowered,
        )
        if group_match:
            candidate_tokens = _tokens_of(group_match.group(1))
            target = self._best_field(fields, candidate_tokens)
            if target:
                group_by.append(target.path)
                consumed.update(target.tokens)
                if target.role in ("used", "generated"):
                    # payload fields are sparse across activities: drop the null group
                    filters.append([target.path, "ne", None])

        metric_tokens = [t for t in tokens if t not in consumed]

        # aggregations
        counting = re.search(r"\b(?:how many|number of|count)\b", lowered) is not None
        mean_match = re.search(r"\b(?:average|avg|mean)\b", lowered)
        sum_match = re.search(r"\b(?:sum of|total of|grand total)\b", lowered)
        metric = None
        if mean_match or sum_match:
            trigger = mean_match or sum_match
            trigger_tokens = set(_tokens_of(trigger.group(0)))
            agg_tokens = [t for t in metric_tokens if t not in trigger_tokens]
            metric = self._best_field(fields, agg_tokens, kinds=("numeric",))
            if metric is None:
                # field names can coincide with activity names already consumed
                all_tokens = [t for t in tokens if t not in trigger_tokens]
                metric = self._best_field(fields, all_tokens, kinds=("numeric",))
            if metric:
                fn = "mean" if mean_match else "sum"
                alias = metric.path.split(".")[-1]
                aggregations.append([metric.path, fn, alias])
            else:
                guess = "_".join(agg_tokens[:3]) or "value"
                aggregations.append([guess, "mean" if mean_match else "sum", "value"])
        if counting and not aggregations:
            aggregations.append(["*", "count", "task_count"])

        # superlatives and time ordering
        desc_match = re.search(
            r"\b(highest|largest|biggest|greatest|maximum|max|most|top|latest|newest|most recent)\b",
            lowered,
        )
        asc_match = re.search(
            r"\b(lowest|smallest|minimum|min|least|fewest|earliest|oldest|first)\b", lowered
        )
        time_words = re.search(
            r"\b(earliest|latest|newest|oldest|most recent|first started|last started)\b", lowered
        )
        count_limit = re.search(
            r"\b(\d+)\s+(?:earliest|latest|first|last|top|highest|lowest|largest|smallest)", lowered
        )

        # "... the most/fewest tasks" implies counting per some entity
        most_tasks = re.search(r"\b(most|fewest|least)\s+task", lowered)
        if most_tasks and not aggregations:
            aggregations.append(["*", "count", "task_count"])
            if not group_by:
                target = self._best_field(fields, [t for t in metric_tokens if t != "task"])
                if target:
                    group_by.append(target.path)
                    consumed.update(target.tokens)

        superlative_consumed = False
        if group_by and not aggregations and (desc_match or asc_match) and not time_words:
            # "maximum X per Y" folds the superlative into a per-group aggregate
            metric = self._best_field(fields, metric_tokens, kinds=("numeric",))
            if metric:
                fn = "max" if desc_match else "min"
                aggregations.append([metric.path, fn, metric.path.split(".")[-1]])
                superlative_consumed = True
        if group_by and not aggregations:
            metric = self._best_field(fields, metric_tokens, kinds=("numeric",))
            if metric:
                aggregations.append([metric.path, "mean", metric.path.split(".")[-1]])
            else:
                aggregations.append(["*", "count", "task_count"])

        if (desc_match or asc_match) and not superlative_consumed:
            direction = "desc" if desc_match and not time_words else None
            if time_words:
                direction = "asc" if asc_match else "desc"
                sort_key = time_field
            elif group_by and aggregations:
                sort_key = aggregations[0][2]
            elif aggregations and aggregations[0][1] in ("mean", "sum"):
                sort_key = None  # single aggregate row; nothing to sort
            else:
                target = self._best_field(fields, metric_tokens, kinds=("numeric",))
                if target:
                    sort_key = target.path
                else:
                    sort_key = "_".join(metric_tokens[:3]) or "value"
            if sort_key:
                sort.append([sort_key, direction or ("asc" if asc_match else "desc")])
                limit = int(count_limit.group(1)) if count_limit else 1

        # projections for "show ..."/"list ..." questions: the field list reads
        # as comma/and-separated noun phrases, one best field per phrase
        if re.match(r"\s*(show|list)\b", lowered) and not group_by and not aggregations:
            filter_paths = {f[0] for f in filters}
            for segment in re.split(r",|\band\b", lowered):
                seg_tokens = _tokens_of(segment)
                if not seg_tokens:
                    continue
                best = None
                for f in fields:
                    if f.path in filter_paths:
                        continue
                    distinctive = {
                        t for t in f.tokens if "." not in t and t not in ("used", "generated")
                    }
                    hits = [i for i, t in enumerate(seg_tokens) if t in distinctive]
                    if not hits:
                        continue
                    rank = (-len(set(seg_tokens) & distinctive), min(hits),
                            _ROLE_RANK[f.role], f.path)
                    if best is None or rank < best[0]:
                        best = (rank, f.path)
                if best and best[1] not in projections:
                    projections.append(best[1])
            if sort and projections:
                for key, _ in sort:
                    if key not in projections:
                        projections.append(key)

        # plots
        if re.search(r"\b(plot|graph|chart|draw)\b", lowered):
            kind = "bar"
            if "line" in lowered:
                kind = "line"
            elif "scatter" in lowered:
                kind = "scatter"
            x = group_by[0] if group_by else None
            y = aggregations[0][2] if aggregations else None
            if x is None:
                categorical = self._best_field(fields, metric_tokens, kinds=("string",))
                x = field_path(categorical) or "activity_id"
            if y is None:
                numeric = self._best_field(fields, metric_tokens, kinds=("numeric",))
                y = field_path(numeric) or "started_at"
                if not group_by:
                    projections = [x, y]
            if x != y:
                plot = {"kind": kind, "x": x, "y": y, "title": question[:60]}

        doc: dict = {"source": "buffer"}
        if filters:
            doc["filters"] = filters
        if projections:
            doc["projections"] = projections
        if group_by:
            doc["group_by"] = group_by
        if aggregations:
            doc["aggregations"] = aggregations
        if sort:
            doc["sort"] = sort
        if limit is not None:
            doc["limit"] = limit
        if plot:
            doc["plot"] = plot
        return doc


# --- replies and the answer pipeline ---------------------------------------------

@dataclass
class AgentReply:
    kind: str  # text | table | plot | error
    summary: str
    intent: str = ""
    ir: QueryIR | None = None
    rendered_ir: str = ""
    table: ResultTable | None = None
    plot: dict | None = None
    findings: list = field(default_factory=list)
    raw_response: str = ""
    provenance_task_ids: list[str] = field(default_factory=list)
    token_estimate: int = 0
    prompt_tokens: int = 0

    def __post_init__(self):
        if self.kind == "table" and self.table is None:
            raise ValueError("table replies must carry a table")
        if self.kind == "plot" and self.plot is None:
            raise ValueError("plot replies must carry plot data")

    def to_doc(self) -> dict:
        return {
            "kind": self.kind,
            "summary": self.summary,
            "intent": self.intent,
            "ir": self.ir.to_doc() if self.ir else None,
            "rendered_ir": self.rendered_ir,
            "table": self.table.to_doc() if self.table else None,
            "plot": self.plot,
            "findings": list(self.findings),
            "raw_response": self.raw_response,
            "provenance_task_ids": list(self.provenance_task_ids),
            "token_estimate": self.token_estimate,
            "prompt_tokens": self.prompt_tokens,
        }


_TOOL_BY_INTENT = {
    "greeting": "greet",
    "guideline_add": "add_guideline",
    "monitor_query": "run_monitor_query",
    "historical_query": "run_historical_query",
    "plot_request": "run_plot_query",
    "other": "clarify",
}

GREETING_REPLY = (
    "Hello! Ask me about the running workflow: task counts, failures, field "
    "values, telemetry, or plots over the live provenance stream."
)

OTHER_REPLY = (
    "I could not map that to a provenance query. Try asking about tasks, "
    "activities, fields, telemetry, or say 'guideline: ...' to teach me a rule."
)


class Agent:
    """Answers natural-language questions over live or stored provenance."""

    def __init__(
        self,
        ctx: ContextManager,
        backend,
        hub: Hub | None = None,
        store=None,
        identity: AgentIdentity | None = None,
        default_config: PromptConfig = FULL_CONFIG,
        llm_summaries: bool = False,
    ):
        self.ctx = ctx
        self.backend = backend
        self.hub = hub
        self.store = store
        self.identity = identity or AgentIdentity("provenance-agent", "provenance agent")
        self.default_config = default_config
        # summaries are template-generated unless explicitly asked for
        self.llm_summaries = llm_summaries
        self._task_seq = 0

    # -- provenance helpers ------------------------------------------------

    def _next_task_id(self, prefix: str) -> str:
        self._task_seq += 1
        return f"{prefix}_{time.time():.6f}_{self._task_seq}"

    def _llm_record(self, purpose: str, prompt: str, response: str,
                    started: float, ended: float) -> TaskRecord:
        return TaskRecord(
            task_id=self._next_task_id("llm"),
            activity_id="llm_completion",
            used={"purpose": purpose, "prompt": prompt, "temperature": 0.0},
            generated={"response": response},
            started_at=started,
            ended_at=ended,
            status="FINISHED",
            type="llm_interaction",
            was_associated_with=self.identity.agent_id,
        ).validate()

    def _publish(self, records: list[TaskRecord]) -> None:
        if self.hub is not None and records:
            try:
                self.hub.publish("agent", records)
            except Exception:
                pass  # provenance is best-effort; never fail the answer

    # -- main entry ----------------------------------------------------------

    def answer(
        self,
        message: str,
        config: PromptConfig | None = None,
        extra_guidelines: list[Guideline] | None = None,
        guideline_store=None,
    ) -> AgentReply:
        """Handle one user message; ``guideline_store`` scopes guideline adds
        (defaults to the shared context manager)."""
        config = config or self.default_config
        if not message or not message.strip():
            return AgentReply(kind="error", summary="empty message", intent="other")
        llm_records: list[TaskRecord] = []

        def tracked_complete(purpose: str, prompt: str) -> str:
            started = time.time()
            response = self.backend.complete(prompt, temperature=0.0)
            llm_records.append(self._llm_record(purpose, prompt, response, started, time.time()))
            return response

        class _TrackedBackend:
            def __init__(self, outer):
                self.outer = outer
                self.name = getattr(outer.backend, "name", "backend")

            def complete(self, prompt, temperature=0.0):
                return tracked_complete("intent_classification", prompt)

        started = time.time()
        intent = route(message, _TrackedBackend(self))
        if intent.note.startswith("backend error"):
            reply = AgentReply(kind="error", summary=intent.note, intent="other")
        elif intent.kind == "greeting":
            reply = AgentReply(kind="text", summary=GREETING_REPLY, intent="greeting")
        elif intent.kind == "guideline_add":
            text = message.strip()[len("guideline:"):].strip()
            sink = guideline_store if guideline_store is not None else self.ctx
            try:
                guideline = sink.add_guideline(text, origin="user")
                reply = AgentReply(
                    kind="text",
                    summary=f"Stored guideline {guideline.id}: {guideline.text}",
                    intent="guideline_add",
                )
            except ValueError as exc:
                reply = AgentReply(kind="error", summary=str(exc), intent="guideline_add")
        elif intent.kind == "other":
            reply = AgentReply(kind="text", summary=OTHER_REPLY, intent="other")
        else:
            reply = self._answer_query(message, config, intent, tracked_complete,
                                       extra_guidelines or [])

        tool_record = TaskRecord(
            task_id=self._next_task_id("tool"),
            activity_id=_TOOL_BY_INTENT[intent.kind],
            used={"message": message, "config": config.label},
            generated={
                "kind": reply.kind,
                "summary": reply.summary[:200],
                "rendered_ir": reply.rendered_ir,
                "row_count": reply.table.row_count if reply.table else 0,
            },
            started_at=started,
            ended_at=time.time(),
            status="ERROR" if reply.kind == "error" else "FINISHED",
            type="task",
            was_informed_by=[r.task_id for r in llm_records] or None,
            was_associated_with=self.identity.agent_id,
        ).validate()
        self._publish(llm_records + [tool_record])
        reply.provenance_task_ids = [r.task_id for r in llm_records] + [tool_record.task_id]
        reply.token_estimate = sum(
            math.ceil(len(r.used["prompt"].encode("utf-8")) / 4)
            + math.ceil(len(r.generated["response"].encode("utf-8")) / 4)
            for r in llm_records
        )
        reply.prompt_tokens = next(
            (
                math.ceil(len(r.used["prompt"].encode("utf-8")) / 4)
                for r in llm_records
                if r.used.get("purpose") == "query_generation"
            ),
            0,
        )
        return reply

    # -- query handling -----------------------------------------------------

    def _answer_query(
        self,
        message: str,
        config: PromptConfig,
        intent: Intent,
        tracked_complete,
        extra_guidelines: list[Guideline],
    ) -> AgentReply:
        schema = self.ctx.schema_snapshot()
        guidelines = self.ctx.guidelines() + list(extra_guidelines)
        prompt = assemble_prompt(config, schema, guidelines, message)
        try:
            response = tracked_complete("query_generation", prompt.text)
        except Exception as exc:
            return AgentReply(kind="error", summary=f"backend unreachable: {exc}",
                              intent=intent.kind)
        ir, findings = self._parse_and_validate(response, schema)
        if ir is None:
            retry_prompt = (
                prompt.text
                + "\n\n## Validation feedback\nThe previous query failed validation: "
                + json.dumps(findings)
                + "\nReturn a corrected JSON query."
            )
            try:
                retry_response = tracked_complete("query_generation_retry", retry_prompt)
            except Exception as exc:
                return AgentReply(kind="error", summary=f"backend unreachable: {exc}",
                                  intent=intent.kind)
            ir, retry_findings = self._parse_and_validate(retry_response, schema)
            if ir is None:
                return AgentReply(
                    kind="error",
                    summary="could not produce a valid query",
                    intent=intent.kind,
                    findings=findings + retry_findings,
                    raw_response=retry_response,
                )
            response = retry_response

        source = "store" if intent.kind == "historical_query" else "buffer"
        if ir.source != source:
            ir = parse_ir_doc({**ir.to_doc(), "source": source})
        if source == "store":
            if self.store is None:
                return AgentReply(kind="error", summary="no persistent store configured",
                                  intent=intent.kind, ir=ir, rendered_ir=render_ir(ir))
            records = self.store.load_view()
        else:
            records = self.ctx.buffer_view()
        try:
            table = execute(ir, records)
        except QueryExecutionError as exc:
            return AgentReply(
                kind="error", summary=f"query execution failed: {exc}",
                intent=intent.kind, ir=ir, rendered_ir=render_ir(ir),
                raw_response=response,
            )

        rendered = render_ir(ir)
        plot_spec = ir.plot
        if plot_spec is None and intent.kind == "plot_request" and len(table.columns) >= 2:
            plot_spec = PlotSpec("bar", table.columns[0], table.columns[1], message[:60])
        if plot_spec is not None and intent.kind != "historical_query":
            plot_doc = self._plot_doc(plot_spec, table)
            if plot_doc is not None:
                return AgentReply(
                    kind="plot",
                    summary=(
                        f"{plot_spec.kind} chart of {plot_spec.y} by {plot_spec.x} "
                        f"over {table.row_count} point(s)."
                    ),
                    intent=intent.kind, ir=ir, rendered_ir=rendered, table=table,
                    plot=plot_doc,
                )
        summary = self._summarize(table)
        if self.llm_summaries:
            try:
                summary = tracked_complete(
                    "summarize", self._summary_prompt(message, rendered, table)
                ).strip() or summary
            except Exception:
                pass  # template summary stands when the backend cannot help
        return AgentReply(
            kind="table",
            summary=summary,
            intent=intent.kind,
            ir=ir,
            rendered_ir=rendered,
            table=table,
        )

    def _parse_and_validate(self, response: str, schema) -> tuple[QueryIR | None, list]:
        match = re.search(r"\{.*\}", response, re.S)
        if not match:
            return None, [{"kind": "parse_error", "path": "", "detail": "no JSON object found"}]
        try:
            doc = json.loads(match.group(0))
            ir = parse_ir_doc(doc)
        except (json.JSONDecodeError, InvalidQueryError) as exc:
            return None, [{"kind": "parse_error", "path": "", "detail": str(exc)}]
        report = validate(ir, schema)
        if not report.ok:
            return None, report.to_doc()
        return ir, []

    @staticmethod
    def _summary_prompt(message: str, rendered: str, table: ResultTable) -> str:
        head = [dict(zip(table.columns, row)) for row in table.rows[:5]]
        return (
            f"{SUMMARIZE_PROMPT_MARKER} in one short sentence for the user.\n"
            f"Question: {message}\nQuery: {rendered}\n"
            f"Row count: {table.row_count}\nFirst rows: {json.dumps(head, default=str)}"
        )

    @staticmethod
    def _summarize(table: ResultTable) -> str:
        if table.row_count == 0:
            return "No matching records."
        if table.row_count == 1 and len(table.columns) <= 4:
            pairs = ", ".join(
                f"{c}={v}" for c, v in zip(table.columns, table.rows[0])
            )
            return f"1 row: {pairs}"
        preview = ", ".join(
            f"{c}={v}" for c, v in list(zip(table.columns, table.rows[0]))[:4]
        )
        return f"{table.row_count} row(s). First row: {preview}"

    @staticmethod
    def _plot_doc(plot: PlotSpec, table: ResultTable) -> dict | None:
        if plot.x not in table.columns or plot.y not in table.columns:
            return None
        return {
            "kind": plot.kind,
            "x": plot.x,
            "y": plot.y,
            "title": plot.title,
            "series": {"x": table.column(plot.x), "y": table.column(plot.y)},
        }
