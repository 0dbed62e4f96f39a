"""End-to-end service demo: replay the chemistry trace, chat over HTTP.

Starts the gateway in-process, feeds it the bundled trace, then exercises
chat, raw-query re-runs (including a hallucinated field corrected by
hand), guidelines, and the anomaly feed exactly as the browser UI does.

Run: python demos/07_live_service.py
"""

import time

from fastapi.testclient import TestClient

from provlens import chemistry_trace_path, replay_trace
from provlens.service import build_runtime, create_app

runtime = build_runtime(store_dir="demo_store", llm_backend="mock")
replay_trace(chemistry_trace_path(), runtime.hub, rate="max")
while len(runtime.ctx.buffer_view()) < 56:
    time.sleep(0.02)

client = TestClient(create_app(runtime))

print("chat:")
reply = client.post("/api/chat", json={
    "message": "which bond has the highest dissociation free energy?"
}).json()
print("  kind:", reply["kind"])
print("  query:", reply["rendered_ir"])
print("  summary:", reply["summary"][:100])

print("\nmanual query with a hallucinated field gets findings back:")
bad = client.post("/api/query", json={"ir": {"filters": [["node", "eq", "x"]]}})
print(" ", bad.status_code, bad.json()["findings"])

print("\ncorrected by hand, it runs:")
good = client.post("/api/query", json={"ir": {
    "filters": [["hostname", "eq", "node0001.cluster.local"]],
    "aggregations": [["*", "count", "n"]],
}})
print("  rows:", good.json()["rows"])

client.post("/api/guidelines", json={"text": "energies are in kcal/mol"})
print("\nguidelines now:", len(client.get("/api/guidelines").json()["guidelines"]))

schema = client.get("/api/schema").json()
print("schema activities:", ", ".join(sorted(schema["activities"])))

runtime.shutdown()
print("\n(for the browser UI, run: provlens serve --replay "
      f"{chemistry_trace_path()} --store demo_store)")
