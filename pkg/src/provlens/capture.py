"""Task capture and the bundled workloads.

``CaptureSession.capture_task`` wraps one unit of work: it samples
timestamps and telemetry around the body, builds a TaskRecord (FINISHED or
ERROR), and hands it to the session's producer. Two workloads drive the
rest of the stack:

* ``run_synthetic`` — a seeded fan-out/fan-in math workflow. Each input x
  runs generate → {square, cube, scale} → reduce, and a final report task
  sums the reduce outputs, so every run yields 5*n_inputs + 1 records.
* ``replay_trace`` — republishes a JSONL trace (such as the bundled
  chemistry run) onto a hub, optionally pacing or re-timestamping it.
"""

from __future__ import annotations

import importlib.resources
import random
import socket
import threading
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .hub import Hub
from .records import RecordParseError, TaskRecord, parse_record, serialize_record


class CaptureError(RuntimeError):
    """The producer rejected a captured record."""


def default_telemetry() -> dict:
    """Process CPU/memory sample; empty where the platform lacks support."""
    try:
        import resource

        usage = resource.getrusage(resource.RUSAGE_SELF)
        return {
            "cpu": {"user_s": usage.ru_utime, "system_s": usage.ru_stime},
            "mem": {"max_rss_kb": usage.ru_maxrss},
        }
    except Exception:
        return {}


class ListProducer:
    """Producer that just collects records; handy for tests and fixtures."""

    def __init__(self):
        self.records: list[TaskRecord] = []

    def enqueue(self, record: TaskRecord) -> None:
        self.records.append(record)


@dataclass
class CaptureSession:
    """Shared identity, clock, and producer for one instrumented workflow."""

    campaign_id: str
    workflow_id: str
    producer: object  # anything with enqueue(TaskRecord)
    clock: Callable[[], float] = time.time
    telemetry_source: Callable[[], dict] = default_telemetry
    hostname: str | Callable[[], str] | None = None
    _seq: int = field(default=0, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def next_task_id(self, started_at: float) -> str:
        with self._lock:
            self._seq += 1
            return f"{started_at:.6f}_{self._seq}"

    def _hostname(self) -> str:
        if callable(self.hostname):
            return self.hostname()
        return self.hostname or socket.gethostname()

    def capture_task(
        self,
        activity_id: str,
        used: dict,
        body: Callable[[dict], dict],
        was_informed_by: list[str] | None = None,
    ) -> tuple[dict | None, TaskRecord]:
        """Run ``body(used)`` and emit a provenance record around it.

        A body failure is captured (status ERROR, traceback in
        ``generated.stderr``) without aborting the session.
        """
        started_at = self.clock()
        telemetry_start = self.telemetry_source()
        result: dict | None = None
        try:
            result = body(used)
            generated = dict(result) if result else {}
            status = "FINISHED"
        except Exception:
            generated = {"stderr": traceback.format_exc(limit=5)}
            status = "ERROR"
        ended_at = self.clock()
        record = TaskRecord(
            task_id=self.next_task_id(started_at),
            campaign_id=self.campaign_id,
            workflow_id=self.workflow_id,
            activity_id=activity_id,
            used=dict(used),
            generated=generated,
            started_at=started_at,
            ended_at=max(ended_at, started_at),
            hostname=self._hostname(),
            telemetry_at_start=telemetry_start,
            telemetry_at_end=self.telemetry_source(),
            status=status,
            type="task",
            was_informed_by=was_informed_by,
        ).validate()
        try:
            self.producer.enqueue(record)
        except Exception as exc:
            raise CaptureError(f"could not enqueue record {record.task_id}") from exc
        return result, record


@dataclass(frozen=True)
class SyntheticSpec:
    """Size and seed of a synthetic fan-out/fan-in run."""

    n_inputs: int
    seed: int = 0

    def __post_init__(self):
        if self.n_inputs < 1:
            raise ValueError("n_inputs must be >= 1")


SYNTHETIC_ACTIVITIES = ("generate", "square", "cube", "scale", "reduce", "report")


def run_synthetic_input(session: CaptureSession, index: int, x: int) -> tuple[int, list[str]]:
    """One fan-out/fan-in pass for a single input value; 5 records."""
    _, gen = session.capture_task("generate", {"input_index": index}, lambda u: {"x": x})
    branches = {}
    branch_ids = []
    for name, fn in (
        ("square", lambda v: v * v),
        ("cube", lambda v: v * v * v),
        ("scale", lambda v: 3 * v),
    ):
        result, rec = session.capture_task(
            name, {"x": x}, lambda u, fn=fn: {name: fn(u["x"])}, was_informed_by=[gen.task_id]
        )
        branches[name] = result[name]
        branch_ids.append(rec.task_id)
    total = branches["square"] + branches["cube"] + branches["scale"]
    _, reduce_rec = session.capture_task(
        "reduce", dict(branches), lambda u: {"sum": u["square"] + u["cube"] + u["scale"]},
        was_informed_by=branch_ids,
    )
    return total, [gen.task_id, *branch_ids, reduce_rec.task_id]


def run_synthetic(spec: SyntheticSpec, session: CaptureSession) -> dict:
    """Run the synthetic workflow; returns a summary of what was emitted."""
    rng = random.Random(spec.seed)
    sums = []
    reduce_ids = []
    for i in range(spec.n_inputs):
        x = rng.randint(1, 100)
        total, ids = run_synthetic_input(session, i, x)
        sums.append(total)
        reduce_ids.append(ids[-1])
    _, report = session.capture_task(
        "report", {"sums": sums}, lambda u: {"total": sum(u["sums"]), "inputs": len(u["sums"])},
        was_informed_by=reduce_ids,
    )
    return {
        "workflow_id": session.workflow_id,
        "records": 5 * spec.n_inputs + 1,
        "total": report.generated["total"],
        "inputs": spec.n_inputs,
    }


def read_trace(path: str | Path) -> list[TaskRecord]:
    """Parse a JSONL trace; aborts with the failing line number."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(parse_record(line, line_number=lineno))
            except RecordParseError:
                raise
            except ValueError as exc:
                raise RecordParseError(str(exc), line=lineno)
    return records


def replay_trace(
    path: str | Path,
    hub: Hub,
    topic: str = "tasks",
    rate: float | str = "max",
    batch_size: int = 64,
) -> dict:
    """Publish a stored trace in file order.

    ``rate`` is records/second, "max" (as fast as possible), or "original"
    (rewrite timestamps so inter-record deltas match the original run,
    relative to replay start).
    """
    if isinstance(rate, (int, float)) and rate <= 0:
        raise ValueError("rate must be positive, 'max', or 'original'")
    records = read_trace(path)
    published = 0
    if rate == "max":
        for i in range(0, len(records), batch_size):
            published += hub.publish(topic, records[i : i + batch_size])
    elif rate == "original":
        if records:
            replay_start = time.time()
            base = records[0].started_at or replay_start
            for record in records:
                shifted = _shift_record(record, replay_start, base)
                wait = (shifted.started_at or replay_start) - time.time()
                if wait > 0:
                    time.sleep(wait)
                published += hub.publish(topic, [shifted])
    else:
        interval = 1.0 / float(rate)
        for record in records:
            published += hub.publish(topic, [record])
            time.sleep(interval)
    return {"published": published, "topic": topic}


def _shift_record(record: TaskRecord, replay_start: float, base: float) -> TaskRecord:
    started = record.started_at
    ended = record.ended_at
    if started is None:
        return record
    new_started = replay_start + (started - base)
    new_ended = new_started + (ended - started) if ended is not None else None
    doc = record.to_doc()
    doc["started_at"] = new_started
    if new_ended is not None:
        doc["ended_at"] = new_ended
    return TaskRecord.from_doc(doc)


# --- bundled chemistry trace --------------------------------------------------

ETHANOL_BONDS = ("C-H_1", "C-H_2", "C-H_3", "C-H_4", "C-H_5", "C-C", "C-O", "O-H")
_ETHANOL_SMILES = "CCO"
_PARENT_FRAGMENTS = {
    "C-H": ("[H]OC([H])([H])[C]([H])[H]", "[H]"),
    "C-C": ("[CH3]", "[CH2]O[H]"),
    "C-O": ("[CH2][CH3]", "[OH]"),
    "O-H": ("[H]OC([H])([H])C([H])([H])[H]", "[H]"),
}
# Rough kcal/mol anchors per bond family; jitter keeps rows distinct.
_BDE_BASE = {"C-H": 99.0, "C-C": 88.0, "C-O": 94.0, "O-H": 105.0}


class _StepClock:
    def __init__(self, start: float, step: float):
        self.now = start
        self.step = step

    def __call__(self) -> float:
        self.now += self.step
        return self.now


def make_chemistry_trace(seed: int = 20250801) -> list[TaskRecord]:
    """Synthetic bond-dissociation run shaped like the chemistry workflow.

    Field names follow the task-message convention (e0/h0/s0/z0 inputs,
    bd_* outputs); the numbers are made up and carry no chemistry truth.
    """
    rng = random.Random(seed)
    producer = ListProducer()
    clock = _StepClock(1753457000.0, 0.5)
    hosts = [f"node{i:04d}.cluster.local" for i in range(4)]

    def telemetry():
        n = len(producer.records)
        return {
            "cpu": {"percent": round(20 + 60 * abs(((n * 7) % 40) / 40 - 0.5) * 2, 1)},
            "mem": {"percent": round(30 + (n % 17), 1)},
        }

    session = CaptureSession(
        campaign_id="chem-campaign-0001",
        workflow_id="chem-workflow-0001",
        producer=producer,
        clock=clock,
        telemetry_source=telemetry,
        hostname=lambda: hosts[len(producer.records) % len(hosts)],
    )

    _, conf = session.capture_task(
        "smiles_to_conformers",
        {"smiles": _ETHANOL_SMILES, "n_conformers": 3},
        lambda u: {"conformer_ids": [f"conf_{i}" for i in range(u["n_conformers"])]},
    )
    parent_e0 = -155.03 - rng.uniform(0, 0.02)
    opt_ids = []
    for i in range(3):
        _, rec = session.capture_task(
            "optimize_parent",
            {"conformer_id": f"conf_{i}", "functional": "B3LYP", "basis": "6-31G*"},
            lambda u, i=i: {
                "e0": parent_e0 + rng.uniform(0, 0.004) * i,
                "converged": True,
                "n_atoms": 9,
                "charge": 0,
                "multiplicity": 1,
            },
            was_informed_by=[conf.task_id],
        )
        opt_ids.append(rec.task_id)
        session.capture_task(
            "frequency_analysis",
            {"conformer_id": f"conf_{i}", "functional": "B3LYP"},
            lambda u: {
                "zpe": round(rng.uniform(0.079, 0.081), 6),
                "h_corr": round(rng.uniform(0.085, 0.086), 6),
                "s0": round(rng.uniform(0.064, 0.065), 6),
                "imaginary_modes": 0,
            },
            was_informed_by=[rec.task_id],
        )

    bde_inputs = []
    for bond in ETHANOL_BONDS:
        family = bond.split("_")[0]
        frag1, frag2 = _PARENT_FRAGMENTS[family]
        _, frag_rec = session.capture_task(
            "fragment_molecule",
            {"smiles": _ETHANOL_SMILES, "bond": bond},
            lambda u, f1=frag1, f2=frag2: {"fragment1": f1, "fragment2": f2},
            was_informed_by=[opt_ids[0]],
        )
        frag_energy_ids = []
        frag_e = []
        for frag_idx, frag in enumerate((frag1, frag2)):
            _, frag_opt = session.capture_task(
                "optimize_fragment",
                {"fragment": frag, "bond": bond, "functional": "B3LYP"},
                lambda u, fi=frag_idx: {
                    "e0": round(-77.0 - rng.uniform(0, 1.0) if fi == 0 else -0.5 - rng.uniform(0, 0.1), 9),
                    "converged": True,
                    "n_atoms": 8 if fi == 0 else 1,
                    "charge": 0,
                    "multiplicity": 2,
                },
                was_informed_by=[frag_rec.task_id],
            )
            result, frag_en = session.capture_task(
                "fragment_energy",
                {"fragment": frag, "bond": bond, "functional": "B3LYP"},
                lambda u, fo=frag_opt: {"e0": fo.generated["e0"], "zpe": round(rng.uniform(0.002, 0.08), 6)},
                was_informed_by=[frag_opt.task_id],
            )
            frag_energy_ids.append(frag_en.task_id)
            frag_e.append(result["e0"])
        base = _BDE_BASE[family]
        energy = round(base + rng.uniform(-2.5, 2.5), 11)
        enthalpy = round(energy + rng.uniform(1.2, 1.8), 11)
        free_energy = round(energy - rng.uniform(5.8, 6.6), 11)
        bde_inputs.append(
            (
                bond,
                frag1,
                frag2,
                frag_energy_ids,
                {"energy": energy, "enthalpy": enthalpy, "free_energy": free_energy},
            )
        )

    bde_ids = []
    for bond, frag1, frag2, parents, vals in bde_inputs:
        _, rec = session.capture_task(
            "run_individual_bde",
            {
                "e0": parent_e0,
                "frags": {"label": bond, "fragment1": frag1, "fragment2": frag2},
                "h0": 0.08547606488512516,
                "outdir": "bde_calc",
                "s0": 0.064344,
                "z0": 0.08026498424723788,
            },
            lambda u, v=vals, b=bond: {
                "bond_id": b,
                "bd_energy": v["energy"],
                "bd_enthalpy": v["enthalpy"],
                "bd_free_energy": v["free_energy"],
            },
            was_informed_by=parents,
        )
        bde_ids.append(rec.task_id)
    session.capture_task(
        "collect_bdes",
        {"bonds": list(ETHANOL_BONDS)},
        lambda u: {"n_bonds": len(u["bonds"]), "functional": "B3LYP"},
        was_informed_by=bde_ids,
    )
    return producer.records


def write_trace(records: list[TaskRecord], path: str | Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(serialize_record(record) + "\n")
    return len(records)


def chemistry_trace_path() -> Path:
    """Location of the bundled chemistry trace JSONL."""
    return Path(importlib.resources.files("provlens").joinpath("data/chemistry_trace.jsonl"))
