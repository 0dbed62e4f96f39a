"""Watch the dataflow schema grow as provenance streams in.

The schema stays the same size whether a workflow runs 1 input or 1,000:
it tracks activities and their fields, never raw task volume.

Run: python demos/02_schema_inference.py
"""

import json

from provlens import (
    CaptureSession,
    ContextManager,
    ListProducer,
    SyntheticSpec,
    chemistry_trace_path,
    read_trace,
    run_synthetic,
)

ctx = ContextManager()

producer = ListProducer()
run_synthetic(SyntheticSpec(n_inputs=50, seed=3), CaptureSession("c", "w", producer))
for record in producer.records:
    ctx.ingest(record)

snapshot = ctx.schema_snapshot()
print(f"after 50 synthetic inputs: {len(snapshot.activities)} activities "
      f"from {len(producer.records)} records")
for name, activity in sorted(snapshot.activities.items()):
    inputs = ", ".join(f"{p}:{s.inferred_type}" for p, s in sorted(activity.inputs.items()))
    outputs = ", ".join(f"{p}:{s.inferred_type}" for p, s in sorted(activity.outputs.items()))
    print(f"  {name:10s} in[{inputs}] out[{outputs}]")

# the chemistry trace has nested documents; they flatten to dotted paths
for record in read_trace(chemistry_trace_path()):
    ctx.ingest(record)
bde = ctx.schema_snapshot().activities["run_individual_bde"]
print("\nchemistry activity run_individual_bde:")
print(json.dumps(bde.to_doc(), indent=2)[:800], "...")
