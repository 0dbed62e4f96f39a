"""Statistical anomaly sweeps over the live task buffer.

Per (activity_id, numeric path) the sweep looks at the most recent
``window`` values and flags outliers either by z-score (sample std,
n-1 denominator; a zero std flags nothing) or by IQR fences (quartiles by
linear interpolation; Q1 - k*IQR .. Q3 + k*IQR, zero IQR flags nothing).
Scanned paths are the numeric scalar leaves under used, generated, and
both telemetry documents; array elements are not scanned. Flags
deduplicate on (task_id, path) so an unchanged buffer re-sweeps to
nothing. The monitor publishes each new flag as an anomaly record and
marks the buffered source record for easy filtering.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field

from .context import ContextManager
from .hub import Hub
from .records import AgentIdentity, TaskRecord

_SCAN_ROOTS = ("used", "generated", "telemetry_at_start", "telemetry_at_end")


@dataclass(frozen=True)
class AnomalyPolicy:
    method: str = "zscore"
    z_threshold: float = 3.0
    iqr_k: float = 1.5
    min_samples: int = 10
    window: int = 100
    period_ms: int = 1000

    def __post_init__(self):
        if self.method not in ("zscore", "iqr"):
            raise ValueError(f"method must be zscore or iqr, got {self.method!r}")
        if self.z_threshold <= 0:
            raise ValueError("z_threshold must be > 0")
        if self.min_samples < 3:
            raise ValueError("min_samples must be >= 3")
        if self.window < self.min_samples:
            raise ValueError("window must be >= min_samples")
        if self.period_ms < 1:
            raise ValueError("period_ms must be >= 1")


@dataclass(frozen=True)
class AnomalyTag:
    source_task_id: str
    path: str
    value: float
    score: float
    method: str
    detected_at: float = field(default_factory=time.time)


def numeric_leaves(record: TaskRecord) -> list[tuple[str, float]]:
    """(path, value) for every numeric scalar under the scanned roots."""
    out: list[tuple[str, float]] = []
    for root in _SCAN_ROOTS:
        doc = getattr(record, root)
        if doc:
            _walk(out, root, doc)
    return out


def _walk(out: list, prefix: str, doc: dict) -> None:
    for key, value in doc.items():
        path = f"{prefix}.{key}"
        if isinstance(value, dict):
            _walk(out, path, value)
        elif isinstance(value, (int, float)) and not isinstance(value, bool):
            out.append((path, float(value)))


def _quartiles(sorted_values: list[float]) -> tuple[float, float]:
    """Q1 and Q3 by linear interpolation over the sorted sample."""
    n = len(sorted_values)

    def at(q: float) -> float:
        pos = (n - 1) * q
        lower = math.floor(pos)
        frac = pos - lower
        if lower + 1 < n:
            return sorted_values[lower] + frac * (sorted_values[lower + 1] - sorted_values[lower])
        return sorted_values[lower]

    return at(0.25), at(0.75)


def sweep(
    records: list[TaskRecord],
    policy: AnomalyPolicy,
    seen: set[tuple[str, str]] | None = None,
) -> list[AnomalyTag]:
    """Flag outliers in the buffer view; see module docstring for rules."""
    series: dict[tuple[str, str], list[tuple[str, float]]] = {}
    for record in records:
        if record.type != "task":
            continue
        for path, value in numeric_leaves(record):
            series.setdefault((record.activity_id, path), []).append((record.task_id, value))

    tags: list[AnomalyTag] = []
    for (activity, path), points in series.items():
        window = points[-policy.window:]
        if len(window) < policy.min_samples:
            continue
        values = [v for _, v in window]
        if policy.method == "zscore":
            mean = sum(values) / len(values)
            acc = 0.0
            for v in values:
                d = v - mean
                acc += d * d
            std = math.sqrt(acc / (len(values) - 1))
            if std == 0:
                continue
            for task_id, value in window:
                z = (value - mean) / std
                if abs(z) > policy.z_threshold:
                    tags.append(AnomalyTag(task_id, path, value, z, "zscore"))
        else:
            q1, q3 = _quartiles(sorted(values))
            iqr = q3 - q1
            if iqr == 0:
                continue
            low = q1 - policy.iqr_k * iqr
            high = q3 + policy.iqr_k * iqr
            for task_id, value in window:
                if value > high:
                    tags.append(AnomalyTag(task_id, path, value, (value - q3) / iqr, "iqr"))
                elif value < low:
                    tags.append(AnomalyTag(task_id, path, value, (value - q1) / iqr, "iqr"))

    if seen is not None:
        fresh = [t for t in tags if (t.source_task_id, t.path) not in seen]
        seen.update((t.source_task_id, t.path) for t in fresh)
        return fresh
    return tags


def anomaly_record(tag: AnomalyTag, agent: AgentIdentity) -> TaskRecord:
    safe_path = tag.path.replace(".", "_")
    return TaskRecord(
        task_id=f"anomaly_{tag.source_task_id}_{safe_path}",
        activity_id="anomaly_detector",
        used={"source_task_id": tag.source_task_id, "path": tag.path},
        generated={"value": tag.value, "score": tag.score, "method": tag.method},
        started_at=tag.detected_at,
        ended_at=tag.detected_at,
        status="FINISHED",
        type="anomaly",
        was_associated_with=agent.agent_id,
    ).validate()


def publish_anomaly(
    tag: AnomalyTag,
    hub: Hub,
    agent: AgentIdentity,
    ctx: ContextManager | None = None,
    topic: str = "anomalies",
) -> TaskRecord:
    """Emit the anomaly record and mark the buffered source task."""
    record = anomaly_record(tag, agent)
    try:
        hub.publish(topic, [record])
    except Exception:
        pass  # best-effort: detection must not take the workflow down
    if ctx is not None:
        ctx.mark_anomaly(
            tag.source_task_id,
            {"path": tag.path, "score": tag.score, "method": tag.method},
        )
    return record


class AnomalyMonitor:
    """Periodic sweeper bound to a context manager and hub."""

    def __init__(
        self,
        ctx: ContextManager,
        hub: Hub,
        policy: AnomalyPolicy | None = None,
        agent: AgentIdentity | None = None,
    ):
        self.ctx = ctx
        self.hub = hub
        self.policy = policy or AnomalyPolicy()
        self.agent = agent or AgentIdentity("anomaly-monitor", "anomaly monitor")
        self._seen: set[tuple[str, str]] = set()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self.published: int = 0

    def sweep_once(self) -> list[TaskRecord]:
        tags = sweep(self.ctx.buffer_view(), self.policy, self._seen)
        out = []
        for tag in tags:
            out.append(publish_anomaly(tag, self.hub, self.agent, self.ctx))
            self.published += 1
        return out

    def start(self) -> "AnomalyMonitor":
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def _run(self) -> None:
        period = self.policy.period_ms / 1000.0
        while not self._stop.wait(period):
            self.sweep_once()

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=5)
