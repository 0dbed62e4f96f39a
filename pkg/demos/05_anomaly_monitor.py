"""Inject a telemetry spike and watch the anomaly monitor flag it.

Run: python demos/05_anomaly_monitor.py
"""

import time

from provlens import (
    AnomalyMonitor,
    AnomalyPolicy,
    ContextManager,
    Filter,
    Hub,
    QueryIR,
    TaskRecord,
    execute,
)

hub = Hub()
ctx = ContextManager()
ctx.attach(hub, topics=("tasks", "anomalies"))

# thirty quiet tasks, then one that burns 40x the usual energy
values = [12.0 + (i % 3) for i in range(30)] + [480.0]
for i, value in enumerate(values):
    hub.publish("tasks", [TaskRecord(
        task_id=f"sim-{i:03d}", activity_id="simulate",
        used={"step": i}, generated={"energy": value}, status="FINISHED",
    )])

while len(ctx.buffer_view()) < len(values):
    time.sleep(0.01)

monitor = AnomalyMonitor(ctx, hub, AnomalyPolicy(method="zscore", z_threshold=3.0))
published = monitor.sweep_once()
for record in published:
    print(f"anomaly: task={record.used['source_task_id']} path={record.used['path']} "
          f"value={record.generated['value']} z={record.generated['score']:.2f}")

# the buffered copy now carries the marker, so queries can filter on it
table = execute(QueryIR(filters=(Filter("anomalous", "eq", True),),
                        projections=("task_id", "generated.energy")), ctx.buffer_view())
print("flagged rows:", table.rows)

# re-sweeping an unchanged buffer stays quiet
print("second sweep publishes:", len(monitor.sweep_once()), "records")
ctx.detach()
