"""Append-only JSONL store with a sidecar index, plus the keeper service.

The store is the persistent side of the stack: one serialized record per
line in ``data.jsonl``, with ``index.json`` carrying task_id -> byte
offset and activity_id -> offsets so lookups avoid a full scan. Appends
deduplicate by task_id, which makes redelivery after a keeper restart
harmless. The keeper subscribes to hub topics and appends everything it
receives.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from .hub import Hub
from .records import TaskRecord, parse_record, serialize_record

DATA_FILE = "data.jsonl"
INDEX_FILE = "index.json"


class StoreNotFoundError(FileNotFoundError):
    pass


class JsonlStore:
    """Single-appender store; readers snapshot the committed length."""

    def __init__(self, root: str | Path, fsync_every: int = 0):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.data_path = self.root / DATA_FILE
        self.index_path = self.root / INDEX_FILE
        self.fsync_every = fsync_every
        self._lock = threading.RLock()
        self._offsets: dict[str, int] = {}
        self._by_activity: dict[str, list[int]] = {}
        self._first_started: float | None = None
        self._last_started: float | None = None
        self._committed = 0
        self._appends_since_sync = 0
        self._load()
        self._fh = open(self.data_path, "a", encoding="utf-8")

    # -- lifecycle ---------------------------------------------------------

    def _load(self) -> None:
        if not self.data_path.exists():
            self.data_path.touch()
        size = self.data_path.stat().st_size
        index = None
        if self.index_path.exists():
            try:
                index = json.loads(self.index_path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                index = None
        if index and index.get("committed") == size:
            self._offsets = {k: int(v) for k, v in index["offsets"].items()}
            self._by_activity = {k: list(v) for k, v in index["by_activity"].items()}
            self._first_started = index.get("first_started")
            self._last_started = index.get("last_started")
            self._committed = size
            return
        # index missing or stale: rebuild by scanning the data file
        self._offsets = {}
        self._by_activity = {}
        offset = 0
        with open(self.data_path, "r", encoding="utf-8") as fh:
            for line in fh:
                stripped = line.strip()
                if stripped:
                    record = parse_record(stripped)
                    self._note(record, offset)
                offset += len(line.encode("utf-8"))
        self._committed = offset

    def _note(self, record: TaskRecord, offset: int) -> None:
        self._offsets[record.task_id] = offset
        self._by_activity.setdefault(record.activity_id, []).append(offset)
        if record.started_at is not None:
            if self._first_started is None or record.started_at < self._first_started:
                self._first_started = record.started_at
            if self._last_started is None or record.started_at > self._last_started:
                self._last_started = record.started_at

    def close(self) -> None:
        with self._lock:
            self.flush_index()
            self._fh.close()

    # -- writes ------------------------------------------------------------

    def append(self, record: TaskRecord) -> bool:
        """Append one record; returns False when task_id is already stored."""
        with self._lock:
            if record.task_id in self._offsets:
                return False
            line = serialize_record(record) + "\n"
            offset = self._committed
            self._fh.write(line)
            self._fh.flush()
            if self.fsync_every:
                self._appends_since_sync += 1
                if self._appends_since_sync >= self.fsync_every:
                    os.fsync(self._fh.fileno())
                    self._appends_since_sync = 0
            self._note(record, offset)
            self._committed += len(line.encode("utf-8"))
            return True

    def flush_index(self) -> None:
        with self._lock:
            doc = {
                "committed": self._committed,
                "offsets": self._offsets,
                "by_activity": self._by_activity,
                "first_started": self._first_started,
                "last_started": self._last_started,
            }
            tmp = self.index_path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(doc), encoding="utf-8")
            tmp.replace(self.index_path)

    # -- reads -------------------------------------------------------------

    @property
    def record_count(self) -> int:
        with self._lock:
            return len(self._offsets)

    def stats(self) -> dict:
        with self._lock:
            return {
                "path": str(self.root),
                "records": len(self._offsets),
                "activities": {a: len(v) for a, v in sorted(self._by_activity.items())},
                "first_started": self._first_started,
                "last_started": self._last_started,
                "bytes": self._committed,
            }

    def get(self, task_id: str) -> TaskRecord | None:
        with self._lock:
            offset = self._offsets.get(task_id)
            committed = self._committed
        if offset is None:
            return None
        return self._read_at(offset, committed)

    def _read_at(self, offset: int, committed: int) -> TaskRecord:
        with open(self.data_path, "r", encoding="utf-8") as fh:
            fh.seek(offset)
            return parse_record(fh.readline().strip())

    def load_view(
        self,
        activity: str | None = None,
        since: float | None = None,
        until: float | None = None,
    ) -> list[TaskRecord]:
        """Records in append order, optionally bounded by activity/started_at."""
        with self._lock:
            committed = self._committed
            wanted = sorted(self._by_activity.get(activity, [])) if activity else None
        records = []
        with open(self.data_path, "r", encoding="utf-8") as fh:
            if wanted is None:
                offset = 0
                while offset < committed:
                    line = fh.readline()
                    if not line:
                        break
                    offset += len(line.encode("utf-8"))
                    if offset > committed:
                        break
                    stripped = line.strip()
                    if stripped:
                        records.append(parse_record(stripped))
            else:
                for off in wanted:
                    if off >= committed:
                        continue
                    fh.seek(off)
                    records.append(parse_record(fh.readline().strip()))
        if since is not None:
            records = [r for r in records if r.started_at is not None and r.started_at >= since]
        if until is not None:
            records = [r for r in records if r.started_at is not None and r.started_at <= until]
        return records


def open_store(root: str | Path, **kwargs) -> JsonlStore:
    """Open an existing store; raises StoreNotFoundError when absent."""
    root = Path(root)
    if not (root / DATA_FILE).exists():
        raise StoreNotFoundError(f"no store at {root}")
    return JsonlStore(root, **kwargs)


class Keeper:
    """Subscribes to hub topics and persists every record exactly once."""

    def __init__(
        self,
        hub: Hub,
        store: JsonlStore,
        topics: tuple[str, ...] = ("tasks", "anomalies", "agent"),
        index_flush_every: int = 500,
    ):
        self.hub = hub
        self.store = store
        self.topics = topics
        self.index_flush_every = index_flush_every
        self._subs = [hub.subscribe(t) for t in topics]
        self._threads: list[threading.Thread] = []
        self._stopping = False
        self._appended = 0
        self.error: Exception | None = None

    def start(self) -> "Keeper":
        for sub in self._subs:
            thread = threading.Thread(target=self._pump, args=(sub,), daemon=True)
            thread.start()
            self._threads.append(thread)
        return self

    def _pump(self, sub) -> None:
        since_flush = 0
        while not self._stopping:
            try:
                record = sub.receive(timeout=0.2)
            except EOFError:
                return
            if record is None:
                continue
            try:
                if self.store.append(record):
                    self._appended += 1
                    since_flush += 1
                    if since_flush >= self.index_flush_every:
                        self.store.flush_index()
                        since_flush = 0
            except OSError as exc:
                # keeper halts; the hub and other services keep running
                self.error = exc
                return

    @property
    def appended_count(self) -> int:
        return self._appended

    def stop(self) -> None:
        self._stopping = True
        for sub in self._subs:
            sub.close()
        for thread in self._threads:
            thread.join(timeout=5)
        self._stopping = False
        self.store.flush_index()
