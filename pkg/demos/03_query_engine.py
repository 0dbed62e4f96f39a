"""Build structured queries, execute them, and round-trip the text form.

Run: python demos/03_query_engine.py
"""

from provlens import (
    Aggregation,
    CaptureSession,
    Filter,
    ListProducer,
    QueryIR,
    SortKey,
    SyntheticSpec,
    execute,
    parse_ir,
    render_ir,
    run_synthetic,
)

producer = ListProducer()
run_synthetic(SyntheticSpec(n_inputs=25, seed=9), CaptureSession("c", "w", producer))
records = producer.records

queries = [
    QueryIR(
        group_by=("activity_id",),
        aggregations=(Aggregation("*", "count", "task_count"),),
        sort=(SortKey("task_count", "desc"), SortKey("activity_id", "asc")),
    ),
    QueryIR(
        filters=(Filter("activity_id", "eq", "reduce"),),
        aggregations=(
            Aggregation("generated.sum", "mean", "mean_sum"),
            Aggregation("generated.sum", "max", "max_sum"),
        ),
    ),
    QueryIR(
        projections=("task_id", "used.x", "generated.square"),
        filters=(Filter("used.x", "gt", 80),),
        sort=(SortKey("used.x", "desc"),),
        limit=5,
    ),
]

for ir in queries:
    text = render_ir(ir)
    print(text)
    assert parse_ir(text) == ir  # text form is lossless
    table = execute(ir, records)
    print("  columns:", table.columns)
    for row in table.rows[:6]:
        print("  ", row)
    print()
