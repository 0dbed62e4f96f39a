"""In-process publish-subscribe hub for provenance records.

Producers publish batches of TaskRecords to named topics; every open
subscription on a topic receives every record (fan-out, not work-sharing).
Delivery preserves per-producer publish order. Subscriber queues are
bounded and publishers block when a queue is full, so no record is dropped
while the hub and the subscription stay open.

An optional TCP transport exposes the same hub to other processes: after a
one-line handshake (``PROVHUB/1 PUB <topic>`` or ``PROVHUB/1 SUB <topic>``)
each record travels as a 4-byte big-endian length prefix followed by its
canonical serialized form.
"""

from __future__ import annotations

import queue
import socket
import socketserver
import threading
import time
from dataclasses import dataclass

from .records import TaskRecord, parse_record, serialize_record

DEFAULT_QUEUE_CAPACITY = 65536

TASKS_TOPIC = "tasks"
ANOMALIES_TOPIC = "anomalies"
AGENT_TOPIC = "agent"


class HubUnavailableError(RuntimeError):
    """The hub has been shut down."""


class ProducerClosedError(RuntimeError):
    """Enqueue attempted on a closed buffered producer."""


_END = object()  # end-of-stream marker on subscription queues


def _check_topic(name: str) -> str:
    if not name or not name.isascii():
        raise ValueError(f"topic name must be non-empty ASCII, got {name!r}")
    return name


@dataclass(frozen=True)
class FlushPolicy:
    """When a buffered producer ships its pending batch."""

    max_buffer: int = 100
    max_interval_ms: int = 1000

    def __post_init__(self):
        if self.max_buffer < 1:
            raise ValueError("max_buffer must be >= 1")
        if self.max_interval_ms < 1:
            raise ValueError("max_interval_ms must be >= 1")


class Subscription:
    """Single-consumer handle over one topic's live stream."""

    def __init__(self, hub: "Hub", topic: str, capacity: int):
        self._hub = hub
        self.topic = topic
        self._queue: queue.Queue = queue.Queue(maxsize=capacity)
        self._closed = False

    def receive(self, timeout: float | None = None) -> TaskRecord | None:
        """Next record, or None if the timeout elapses.

        Raises EOFError once the subscription is closed and drained.
        """
        if self._closed and self._queue.empty():
            raise EOFError("subscription closed")
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        if item is _END:
            self._closed = True
            raise EOFError("subscription closed")
        return item

    def __iter__(self):
        while True:
            try:
                item = self.receive()
            except EOFError:
                return
            if item is not None:
                yield item

    def _deliver(self, record: TaskRecord) -> None:
        self._queue.put(record)  # blocks when full: no-loss over drop

    def close(self) -> None:
        if not self._closed:
            self._hub._drop_subscription(self)
            self._queue.put(_END)

    def drain(self) -> list[TaskRecord]:
        """Close and return everything still queued."""
        self.close()
        out = []
        while True:
            try:
                out.append(self.receive(timeout=0.01))
            except EOFError:
                return [r for r in out if r is not None]


class Hub:
    """Thread-safe fan-out hub keyed by topic name."""

    def __init__(self, queue_capacity: int = DEFAULT_QUEUE_CAPACITY):
        self._queue_capacity = queue_capacity
        self._subs: dict[str, list[Subscription]] = {}
        self._lock = threading.Lock()
        self._publish_locks: dict[str, threading.Lock] = {}
        self._closed = False

    def publish(self, topic: str, records: list[TaskRecord]) -> int:
        _check_topic(topic)
        if self._closed:
            raise HubUnavailableError("hub is shut down")
        with self._lock:
            subs = list(self._subs.get(topic, ()))
            per_topic = self._publish_locks.setdefault(topic, threading.Lock())
        # Serialize delivery per topic so one producer's batch is not
        # interleaved with another's mid-batch (per-producer FIFO).
        with per_topic:
            for record in records:
                for sub in subs:
                    sub._deliver(record)
        return len(records)

    def subscribe(self, topic: str) -> Subscription:
        _check_topic(topic)
        if self._closed:
            raise HubUnavailableError("hub is shut down")
        sub = Subscription(self, topic, self._queue_capacity)
        with self._lock:
            self._subs.setdefault(topic, []).append(sub)
        return sub

    def _drop_subscription(self, sub: Subscription) -> None:
        with self._lock:
            subs = self._subs.get(sub.topic, [])
            if sub in subs:
                subs.remove(sub)

    def shutdown(self) -> None:
        with self._lock:
            self._closed = True
            subs = [s for group in self._subs.values() for s in group]
            self._subs.clear()
        for sub in subs:
            sub._queue.put(_END)


class BufferedProducer:
    """Batches records and publishes when size or age thresholds hit.

    Owned by a single producer activity; a background flusher handles the
    age threshold so enqueue never blocks beyond the buffer append (unless
    a downstream subscriber queue is full).
    """

    def __init__(self, hub: Hub, topic: str, policy: FlushPolicy | None = None):
        self.hub = hub
        self.topic = _check_topic(topic)
        self.policy = policy or FlushPolicy()
        self._pending: list[TaskRecord] = []
        self._oldest: float | None = None
        self._lock = threading.Lock()
        self._wake = threading.Condition(self._lock)
        self._closed = False
        self._published = 0
        self._flusher = threading.Thread(target=self._run_flusher, daemon=True)
        self._flusher.start()

    def enqueue(self, record: TaskRecord) -> None:
        batch = None
        with self._lock:
            if self._closed:
                raise ProducerClosedError("producer is closed")
            self._pending.append(record)
            if self._oldest is None:
                self._oldest = time.monotonic()
                self._wake.notify()
            if len(self._pending) >= self.policy.max_buffer:
                batch = self._take_locked()
        if batch:
            self._publish(batch)

    def flush(self) -> None:
        with self._lock:
            batch = self._take_locked()
        if batch:
            self._publish(batch)

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            batch = self._take_locked()
            self._wake.notify()
        if batch:
            self._publish(batch)
        self._flusher.join(timeout=5)

    @property
    def published_count(self) -> int:
        return self._published

    def _take_locked(self) -> list[TaskRecord]:
        batch = self._pending
        self._pending = []
        self._oldest = None
        return batch

    def _publish(self, batch: list[TaskRecord]) -> None:
        # Batches never exceed max_buffer even on close-time flushes.
        cap = self.policy.max_buffer
        for i in range(0, len(batch), cap):
            self._published += self.hub.publish(self.topic, batch[i : i + cap])

    def _run_flusher(self) -> None:
        interval = self.policy.max_interval_ms / 1000.0
        while True:
            with self._lock:
                while not self._closed and self._oldest is None:
                    self._wake.wait()
                if self._closed:
                    return
                deadline = self._oldest + interval
                remaining = deadline - time.monotonic()
                if remaining > 0:
                    self._wake.wait(timeout=remaining)
                    continue
                batch = self._take_locked()
            if batch:
                self._publish(batch)


# --- TCP transport -----------------------------------------------------------

HANDSHAKE_PREFIX = "PROVHUB/1"


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed")
        buf += chunk
    return buf


def write_frame(sock: socket.socket, record: TaskRecord) -> None:
    payload = serialize_record(record).encode("utf-8")
    sock.sendall(len(payload).to_bytes(4, "big") + payload)


def read_frame(sock: socket.socket) -> TaskRecord:
    size = int.from_bytes(_read_exact(sock, 4), "big")
    return parse_record(_read_exact(sock, size).decode("utf-8"))


class _HubTCPHandler(socketserver.BaseRequestHandler):
    def handle(self):
        hub: Hub = self.server.hub  # type: ignore[attr-defined]
        line = b""
        while not line.endswith(b"\n"):
            chunk = self.request.recv(1)
            if not chunk:
                return
            line += chunk
            if len(line) > 256:
                return
        parts = line.decode("ascii", "replace").strip().split(" ")
        if len(parts) != 3 or parts[0] != HANDSHAKE_PREFIX:
            self.request.sendall(b"ERR bad handshake\n")
            return
        verb, topic = parts[1], parts[2]
        if verb == "PUB":
            self.request.sendall(b"OK\n")
            try:
                while True:
                    hub.publish(topic, [read_frame(self.request)])
            except (ConnectionError, OSError):
                return
        elif verb == "SUB":
            self.request.sendall(b"OK\n")
            sub = hub.subscribe(topic)
            try:
                while True:
                    try:
                        record = sub.receive(timeout=0.25)
                    except EOFError:
                        return
                    if record is not None:
                        write_frame(self.request, record)
            except (ConnectionError, OSError):
                return
            finally:
                sub.close()
        else:
            self.request.sendall(b"ERR unknown verb\n")


class HubTCPServer(socketserver.ThreadingTCPServer):
    """Serves a local Hub over the length-prefixed TCP transport."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, hub: Hub, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _HubTCPHandler)
        self.hub = hub
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[0], self.server_address[1]

    def start(self) -> "HubTCPServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def connect_publisher(host: str, port: int, topic: str) -> socket.socket:
    sock = socket.create_connection((host, port), timeout=10)
    sock.sendall(f"{HANDSHAKE_PREFIX} PUB {topic}\n".encode("ascii"))
    _expect_ok(sock)
    return sock


def connect_subscriber(host: str, port: int, topic: str) -> socket.socket:
    sock = socket.create_connection((host, port), timeout=10)
    sock.sendall(f"{HANDSHAKE_PREFIX} SUB {topic}\n".encode("ascii"))
    _expect_ok(sock)
    return sock


def _expect_ok(sock: socket.socket) -> None:
    line = b""
    while not line.endswith(b"\n"):
        chunk = sock.recv(1)
        if not chunk:
            raise ConnectionError("no handshake reply")
        line += chunk
    if line.strip() != b"OK":
        raise ConnectionError(f"handshake rejected: {line!r}")
