"""Capture tasks, batch them through the hub, and watch a subscriber drain them.

Run: python demos/01_capture_and_stream.py
"""

from provlens import BufferedProducer, CaptureSession, FlushPolicy, Hub

hub = Hub()
subscriber = hub.subscribe("tasks")

# batches flush at 5 records or after 100 ms, whichever comes first
producer = BufferedProducer(hub, "tasks", FlushPolicy(max_buffer=5, max_interval_ms=100))
session = CaptureSession(
    campaign_id="demo-campaign", workflow_id="demo-workflow", producer=producer
)

for i in range(12):
    result, record = session.capture_task(
        "double", {"x": i}, lambda used: {"y": used["x"] * 2}
    )
    print(f"captured {record.task_id}  {record.used} -> {record.generated}")

# a failing body is captured too, with the traceback in generated.stderr
_, failed = session.capture_task("explode", {"x": 0}, lambda used: 1 / used["x"])
print(f"failure recorded with status={failed.status}")

producer.close()

received = list(subscriber.drain())
print(f"\nsubscriber received {len(received)} records, in order:")
for record in received[:5]:
    print("  ", record.task_id, record.activity_id, record.status)
print("   ...")
