"""Run the full evaluation matrix with the mock model and oracle judge.

20 golden queries x 7 prompt configurations x 3 repetitions = 420 runs,
scored by functional equivalence against hand-written gold queries and
aggregated by per-query medians. Charts and CSVs land in demo_eval_out/.

Run: python demos/06_evaluation_run.py
"""

from provlens.agent import MockBackend, PROMPT_CONFIGS
from provlens.evalharness import build_synthetic_query_set, emit_report, run_matrix

query_set = build_synthetic_query_set()
report = run_matrix(
    query_set,
    configs=list(PROMPT_CONFIGS),
    models=[MockBackend()],
    repetitions=3,
)

print(f"{len(report.records)} evaluation records\n")
print(f"{'configuration':28s} {'score':>7s} {'prompt tok':>11s} {'total tok':>10s}")
for config in PROMPT_CONFIGS:
    row = report.by_config[(config.label, "mock", "oracle")]
    print(f"{config.label:28s} {row['mean_score']:7.3f} "
          f"{row['mean_prompt_tokens']:11.0f} {row['mean_tokens']:10.0f}")

print("\nscores by query class (Full config):")
for (workload, data_type, _, _), score in sorted(report.by_class.items()):
    print(f"  {workload:4s} {data_type:12s} {score:.3f}")

paths = emit_report(report, "demo_eval_out")
print("\nwrote:", ", ".join(str(p) for p in paths.values()))
