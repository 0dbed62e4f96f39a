from __future__ import annotations

import json
import random

import pytest

from provlens.records import (
    AgentIdentity,
    QueryClass,
    RecordParseError,
    RecordValidationError,
    TaskRecord,
    all_single_type_leaves,
    classify_query_label,
    parse_record,
    serialize_record,
)

from gen import CHEM_LINE, rand_record


def test_parse_chemistry_message():
    record = parse_record(CHEM_LINE)
    assert record.activity_id == "run_individual_bde"
    assert record.started_at == 1753457858.952133
    assert record.hostname == "frontier00084.frontier.olcf.ornl.gov"
    assert record.used["e0"] == -155.033799510504
    assert record.used["frags"]["label"] == "C-H_3"
    assert record.generated["bd_energy"] == 98.64865792890485
    assert record.status == "FINISHED"
    assert record.extras == {}


def test_serialize_chemistry_message_field_for_field():
    record = parse_record(CHEM_LINE)
    line = serialize_record(record)
    assert line == CHEM_LINE
    assert json.loads(line) == json.loads(CHEM_LINE)
    assert list(json.loads(line)) == list(json.loads(CHEM_LINE))
    assert "-155.033799510504" in line
    assert "98.64865792890485" in line


def test_serialize_minimal_record():
    record = TaskRecord(task_id="t1", activity_id="add_one")
    line = serialize_record(record)
    assert '"used":{}' in line
    assert '"generated":{}' in line
    assert "hostname" not in line
    assert "was_informed_by" not in line


def test_round_trip_randomized_records():
    rng = random.Random(20240817)
    for i in range(1000):
        record = rand_record(rng, seq=i)
        assert parse_record(serialize_record(record)) == record


def test_unknown_fields_preserved():
    doc = json.loads(CHEM_LINE)
    doc["adapter_note"] = {"source": "mlflow"}
    record = parse_record(json.dumps(doc))
    assert record.extras == {"adapter_note": {"source": "mlflow"}}
    assert json.loads(serialize_record(record))["adapter_note"] == {"source": "mlflow"}


def test_parse_empty_string_is_parse_error():
    with pytest.raises(RecordParseError):
        parse_record("")


def test_parse_error_carries_offset():
    with pytest.raises(RecordParseError) as err:
        parse_record('{"task_id": "a", bad}')
    assert err.value.offset > 0


def test_ended_before_started_names_field():
    doc = json.loads(CHEM_LINE)
    doc["ended_at"] = doc["started_at"] - 1
    with pytest.raises(RecordValidationError) as err:
        parse_record(json.dumps(doc))
    assert err.value.field == "ended_at"


@pytest.mark.parametrize(
    "payload", [{"x": None}, {"x": {"y": [None]}}, {"x": object}]
)
def test_payload_rejects_non_scalars(payload):
    record = TaskRecord(task_id="t", activity_id="a", used=payload)
    with pytest.raises(RecordValidationError) as err:
        record.validate()
    assert err.value.field.startswith("used")


def test_bad_status_rejected():
    record = TaskRecord(task_id="t", activity_id="a", status="DONE")
    with pytest.raises(RecordValidationError) as err:
        record.validate()
    assert err.value.field == "status"


def test_classify_single_leaf():
    label = QueryClass("retrospective", "online", "OLTP", frozenset({"scheduling"}))
    assert classify_query_label(label) == [
        ("retrospective", "online", "OLTP", "scheduling")
    ]


def test_classify_multi_type_label():
    label = QueryClass(
        "retrospective", "online", "OLAP", frozenset({"telemetry", "scheduling"})
    )
    leaves = classify_query_label(label)
    assert len(leaves) == 2
    assert {leaf[3] for leaf in leaves} == {"scheduling", "telemetry"}


def test_exactly_32_single_type_leaves():
    leaves = all_single_type_leaves()
    assert len(leaves) == 32
    assert len(set(leaves)) == 32


def test_query_class_requires_data_types():
    with pytest.raises(ValueError):
        QueryClass("retrospective", "online", "OLAP", frozenset())


def test_agent_identity_requires_id():
    with pytest.raises(ValueError):
        AgentIdentity("")
    assert AgentIdentity("agent-1", "watcher").agent_id == "agent-1"
