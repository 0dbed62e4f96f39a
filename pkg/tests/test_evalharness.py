from __future__ import annotations

import statistics

import pytest

from provlens.agent import CONFIGS_BY_LABEL, MockBackend, PROMPT_CONFIGS
from provlens.evalharness import (
    JudgeScore,
    JudgeUnavailable,
    LLMJudge,
    OracleJudge,
    QuerySet,
    build_synthetic_query_set,
    emit_report,
    llm_judge,
    oracle_judge,
    query_set_distribution,
    run_matrix,
    schema_of,
    token_curve,
    verify_query_set,
)
from provlens.query import Filter, QueryIR, parse_ir_doc, validate, execute


@pytest.fixture(scope="module")
def query_set() -> QuerySet:
    return build_synthetic_query_set()


@pytest.fixture(scope="module")
def fixture_schema(query_set):
    return schema_of(query_set.fixture)


# --- query set structure -----------------------------------------------------


def test_distribution_matches_published_table(query_set):
    dist = query_set_distribution(query_set)
    assert dist["queries"] == 20
    assert dist["workloads"] == {"OLAP": 10, "OLTP": 10}
    assert dist["by_type"] == {
        "control_flow": 7, "dataflow": 7, "scheduling": 8, "telemetry": 9,
    }
    assert dist["by_type_workload"] == {
        "control_flow/OLAP": 4, "control_flow/OLTP": 3,
        "dataflow/OLAP": 3, "dataflow/OLTP": 4,
        "scheduling/OLAP": 3, "scheduling/OLTP": 5,
        "telemetry/OLAP": 4, "telemetry/OLTP": 5,
    }


def test_all_queries_online_retrospective(query_set):
    for query in query_set.queries:
        assert query.query_class.nature == "retrospective"
        assert query.query_class.mode == "online"


def test_gold_irs_validate_and_execute(query_set, fixture_schema):
    verify_query_set(query_set)  # raises on any problem
    for query in query_set.queries:
        assert validate(query.gold_ir, fixture_schema).ok, query.id
        execute(query.gold_ir, query_set.fixture)


def test_query_set_doc_round_trip(query_set):
    doc = query_set.to_doc()
    rebuilt = QuerySet.from_doc(doc)
    assert [q.id for q in rebuilt.queries] == [q.id for q in query_set.queries]
    assert [q.gold_ir for q in rebuilt.queries] == [q.gold_ir for q in query_set.queries]
    assert len(rebuilt.fixture) == len(query_set.fixture)
    assert rebuilt.fixture[0].task_id == query_set.fixture[0].task_id


def test_fixture_deterministic(query_set):
    rebuilt = build_synthetic_query_set()
    assert [r.task_id for r in rebuilt.fixture] == [r.task_id for r in query_set.fixture]
    assert [q.nl_text for q in rebuilt.queries] == [q.nl_text for q in query_set.queries]


# --- oracle judge ---------------------------------------------------------------


def test_judge_identity_is_one_for_all_golds(query_set, fixture_schema):
    for query in query_set.queries:
        score = oracle_judge(query.gold_ir, query.gold_ir, query_set.fixture, fixture_schema)
        assert score.score == 1.0, query.id


def test_judge_invalid_ir_scores_zero(query_set, fixture_schema):
    assert oracle_judge(
        query_set.queries[0].gold_ir, None, query_set.fixture, fixture_schema
    ).score == 0.0
    hallucinated = QueryIR(filters=(Filter("node", "eq", "x"),))
    assert oracle_judge(
        query_set.queries[0].gold_ir, hallucinated, query_set.fixture, fixture_schema
    ).score == 0.0


def test_judge_filter_order_functionally_equal(query_set, fixture_schema):
    gold = parse_ir_doc({
        "filters": [["status", "eq", "FINISHED"], ["activity_id", "eq", "reduce"]],
        "aggregations": [["generated.sum", "mean", "m"]],
    })
    swapped = parse_ir_doc({
        "filters": [["activity_id", "eq", "reduce"], ["status", "eq", "FINISHED"]],
        "aggregations": [["generated.sum", "mean", "m"]],
    })
    score = oracle_judge(gold, swapped, query_set.fixture, fixture_schema)
    assert score.score == 1.0  # result equality dominates


def test_judge_alias_names_do_not_matter_when_results_differ(query_set, fixture_schema):
    # same filters and aggregation, wrong group key -> 0.40 + 0.25 + 0.10 + 0.05 + 0.05
    gold = parse_ir_doc({
        "group_by": ["activity_id"],
        "aggregations": [["*", "count", "task_count"]],
    })
    generated = parse_ir_doc({
        "group_by": ["hostname"],
        "aggregations": [["*", "count", "n"]],
    })
    score = oracle_judge(gold, generated, query_set.fixture, fixture_schema)
    assert abs(score.score - 0.85) <= 0.001


def test_judge_bare_vs_prefixed_paths_canonicalized(query_set, fixture_schema):
    gold = parse_ir_doc({
        "filters": [["activity_id", "eq", "reduce"]],
        "aggregations": [["generated.sum", "mean", "m"]],
    })
    bare = parse_ir_doc({
        "filters": [["activity_id", "eq", "reduce"]],
        "aggregations": [["sum", "mean", "m"]],
    })
    assert oracle_judge(gold, bare, query_set.fixture, fixture_schema).score == 1.0


def test_judge_score_bounds():
    with pytest.raises(ValueError):
        JudgeScore(1.2, "x", "oracle")
    with pytest.raises(ValueError):
        JudgeScore(-0.1, "x", "oracle")


# --- llm judge ---------------------------------------------------------------


class EchoJudgeBackend:
    """Scores every pair by delegating to the oracle, like a perfect judge."""

    name = "echo"

    def __init__(self, query_set, schema):
        self.query_set = query_set
        self.schema = schema
        self.pairs = {}

    def complete(self, prompt, temperature=0.0):
        import re

        gold_text = re.search(r"Gold query: (.+)", prompt).group(1)
        generated_text = re.search(r"Generated query: (.+)", prompt).group(1)
        from provlens.query import parse_ir

        gold = parse_ir(gold_text)
        generated = None if generated_text.startswith("(") else parse_ir(generated_text)
        score = oracle_judge(gold, generated, self.query_set.fixture, self.schema)
        return f"Score: {score.score} — {score.rationale}"


def test_llm_judge_parses_scores(query_set, fixture_schema):
    class Fixed:
        name = "fixed"

        def complete(self, prompt, temperature=0.0):
            return "Score: 0.85 — wrong grouping"

    score = llm_judge(
        query_set.queries[0].gold_ir, query_set.queries[0].gold_ir,
        fixture_schema, [], Fixed(),
    )
    assert score.score == 0.85
    assert score.judge == "llm:fixed"


def test_llm_judge_unparseable_scores_zero(query_set, fixture_schema):
    class Mumbles:
        name = "mumbles"

        def complete(self, prompt, temperature=0.0):
            return "that query seems fine to me"

    score = llm_judge(
        query_set.queries[0].gold_ir, query_set.queries[0].gold_ir,
        fixture_schema, [], Mumbles(),
    )
    assert score.score == 0.0
    assert score.rationale == "unparseable"


def test_llm_judge_backend_failure_raises(query_set, fixture_schema):
    class Down:
        name = "down"

        def complete(self, prompt, temperature=0.0):
            raise ConnectionError("nope")

    with pytest.raises(JudgeUnavailable):
        llm_judge(
            query_set.queries[0].gold_ir, query_set.queries[0].gold_ir,
            fixture_schema, [], Down(),
        )


def test_echo_llm_judge_matches_oracle_on_golds(query_set, fixture_schema):
    judge = LLMJudge(EchoJudgeBackend(query_set, fixture_schema), fixture_schema, [])
    for query in query_set.queries[:5]:
        assert judge(query.gold_ir, query.gold_ir).score == 1.0


# --- matrix runs ------------------------------------------------------------------


class FakeTimer:
    def __init__(self):
        self.now = 0.0

    def __call__(self):
        self.now += 0.001
        return self.now


@pytest.fixture(scope="module")
def matrix_report(query_set):
    return run_matrix(
        query_set,
        configs=list(PROMPT_CONFIGS),
        models=[MockBackend()],
        repetitions=3,
        timer=FakeTimer(),
    )


def test_matrix_produces_420_records(matrix_report):
    assert len(matrix_report.records) == 20 * 7 * 1 * 3
    assert matrix_report.meta["expected_records"] == 420
    assert matrix_report.meta["gaps"] == 0


def test_matrix_uses_medians(matrix_report):
    assert statistics.median([0.2, 0.5, 0.9]) == 0.5
    for (query_id, config, model, judge), median in matrix_report.per_query_medians.items():
        raw = [
            r.scores[judge]
            for r in matrix_report.records
            if r.query_id == query_id and r.config_label == config and r.model == model
        ]
        assert median == statistics.median(raw)


def test_matrix_full_beats_baseline(matrix_report):
    full = matrix_report.by_config[("Full", "mock", "oracle")]["mean_score"]
    baseline = matrix_report.by_config[("Baseline", "mock", "oracle")]["mean_score"]
    assert full > baseline


def test_matrix_bit_identical_across_runs(query_set):
    docs = []
    for _ in range(2):
        report = run_matrix(
            query_set,
            configs=list(PROMPT_CONFIGS),
            models=[MockBackend()],
            repetitions=3,
            timer=FakeTimer(),
        )
        docs.append(report.to_doc())
    assert docs[0] == docs[1]


def test_matrix_two_judges_two_score_columns(query_set, fixture_schema):
    judges = [
        OracleJudge(query_set.fixture, fixture_schema),
        LLMJudge(EchoJudgeBackend(query_set, fixture_schema), fixture_schema, []),
    ]
    report = run_matrix(
        query_set,
        configs=[CONFIGS_BY_LABEL["Full"]],
        models=[MockBackend()],
        judges=judges,
        repetitions=1,
        timer=FakeTimer(),
    )
    assert report.judges == ["oracle", "llm:echo"]
    for record in report.records:
        assert set(record.scores) == {"oracle", "llm:echo"}
    assert ("oracle", "mock") in report.judge_model
    assert ("llm:echo", "mock") in report.judge_model


def test_matrix_by_class_covers_all_tags(matrix_report, query_set):
    tags = set()
    for query in query_set.queries:
        for dt in query.query_class.data_types:
            tags.add((query.query_class.workload, dt, "mock", "oracle"))
    assert set(matrix_report.by_class) == tags


def test_token_curve_monotone_along_chain(query_set):
    curve = token_curve(query_set, list(PROMPT_CONFIGS))
    chain = ["Nothing", "Baseline", "Baseline+FS", "Baseline+FS+Schema",
             "Baseline+FS+Schema+Values", "Full"]
    values = [curve[label] for label in chain]
    assert values == sorted(values) and len(set(values)) == len(values)
    assert curve["Baseline+FS"] < curve["Baseline+FS+Guidelines"] < curve["Full"]


# --- report emission ---------------------------------------------------------------


def test_emit_report_files(matrix_report, tmp_path):
    paths = emit_report(matrix_report, tmp_path / "out")
    for key in ("records", "per_query_medians", "by_config", "by_class", "judge_model",
                "scores_by_config", "scores_by_class", "tokens_by_config"):
        assert paths[key].exists(), key
    records_lines = paths["records"].read_text().strip().splitlines()
    assert len(records_lines) == 421  # header + 420 rows
    config_lines = paths["by_config"].read_text().strip().splitlines()
    assert len(config_lines) == 1 + 7  # one row per (config, model, judge)


def test_report_tokens_strictly_increase_along_chain(matrix_report):
    chain = ["Nothing", "Baseline", "Baseline+FS", "Baseline+FS+Schema",
             "Baseline+FS+Schema+Values", "Full"]
    tokens = [
        matrix_report.by_config[(label, "mock", "oracle")]["mean_prompt_tokens"]
        for label in chain
    ]
    assert tokens == sorted(tokens) and len(set(tokens)) == len(tokens)
    branch = [
        matrix_report.by_config[(label, "mock", "oracle")]["mean_prompt_tokens"]
        for label in ["Baseline+FS", "Baseline+FS+Guidelines", "Full"]
    ]
    assert branch == sorted(branch) and len(set(branch)) == len(branch)
