from __future__ import annotations

import time

import pytest
from fastapi.testclient import TestClient

from provlens.capture import chemistry_trace_path, replay_trace, run_synthetic, SyntheticSpec, CaptureSession
from provlens.hub import BufferedProducer, FlushPolicy
from provlens.service import build_runtime, create_app


@pytest.fixture()
def runtime(tmp_path):
    rt = build_runtime(store_dir=str(tmp_path / "store"), llm_backend="mock", anomaly=False)
    yield rt
    rt.shutdown()


@pytest.fixture()
def chem_client(runtime):
    replay_trace(chemistry_trace_path(), runtime.hub, rate="max")
    deadline = time.time() + 5
    while time.time() < deadline and len(runtime.ctx.buffer_view()) < 56:
        time.sleep(0.02)
    with TestClient(create_app(runtime)) as client:
        yield client, runtime


def test_chat_greeting(chem_client):
    client, _ = chem_client
    response = client.post("/api/chat", json={"message": "hello"})
    assert response.status_code == 200
    doc = response.json()
    assert doc["kind"] == "text"
    assert doc["table"] is None


def test_chat_empty_message_400(chem_client):
    client, _ = chem_client
    assert client.post("/api/chat", json={"message": ""}).status_code == 400
    assert client.post("/api/chat", json={}).status_code == 400


def test_chat_bad_config_label_400(chem_client):
    client, _ = chem_client
    response = client.post(
        "/api/chat", json={"message": "hi", "config_label": "Baseline+Everything"}
    )
    assert response.status_code == 400


def test_chat_plot_request(chem_client):
    client, _ = chem_client
    response = client.post(
        "/api/chat", json={"message": "plot a bar graph of bd_enthalpy per bond_id"}
    )
    assert response.status_code == 200
    doc = response.json()
    assert doc["kind"] == "plot"
    assert doc["plot"]["kind"] == "bar"
    assert len(doc["plot"]["series"]["x"]) == 8
    assert doc["rendered_ir"].startswith("SELECT")


def test_chat_backend_unavailable_503(tmp_path, monkeypatch):
    rt = build_runtime(store_dir=None, llm_backend="mock", anomaly=False)
    try:
        def broken(prompt, temperature=0.0):
            raise ConnectionError("llm down")

        # break only the query-generation path; routing stays rule-based
        monkeypatch.setattr(rt.agent.backend, "complete", broken)
        with TestClient(create_app(rt)) as client:
            response = client.post(
                "/api/chat", json={"message": "plot a bar graph of anything"}
            )
            assert response.status_code == 503
    finally:
        rt.shutdown()


def test_query_endpoint_gold_equivalence(chem_client):
    client, runtime = chem_client
    body = {
        "ir": {
            "filters": [["activity_id", "eq", "run_individual_bde"]],
            "aggregations": [["generated.bd_energy", "mean", "mean_bde"]],
        }
    }
    response = client.post("/api/query", json=body)
    assert response.status_code == 200
    doc = response.json()
    assert doc["columns"] == ["mean_bde"]
    from provlens.query import execute, parse_ir_doc

    expected = execute(parse_ir_doc(body["ir"]), runtime.ctx.buffer_view())
    assert doc["rows"][0][0] == expected.rows[0][0]
    assert doc["findings"] == []


def test_query_endpoint_unresolved_path_422(chem_client):
    client, _ = chem_client
    response = client.post("/api/query", json={"ir": {"filters": [["node", "eq", "x"]]}})
    assert response.status_code == 422
    findings = response.json()["findings"]
    assert findings[0]["kind"] == "unresolved_path"
    assert findings[0]["path"] == "node"


def test_query_endpoint_text_form(chem_client):
    client, _ = chem_client
    response = client.post(
        "/api/query",
        json={"text": 'SELECT count(*) AS n FROM buffer WHERE activity_id = "run_individual_bde"'},
    )
    assert response.status_code == 200
    assert response.json()["rows"] == [[8]]


def test_query_endpoint_row_cap(chem_client):
    client, _ = chem_client
    response = client.post("/api/query", json={"ir": {}})
    assert response.status_code == 200
    doc = response.json()
    assert doc["row_count"] == 56
    assert doc["truncated"] is False
    assert len(doc["rows"]) == 56


def test_schema_endpoint(chem_client):
    client, _ = chem_client
    doc = client.get("/api/schema").json()
    assert "run_individual_bde" in doc["activities"]
    assert "task_id" in doc["common_fields"]


def test_guidelines_add_and_list(chem_client):
    client, _ = chem_client
    before = client.get("/api/guidelines").json()["guidelines"]
    response = client.post("/api/guidelines", json={"text": "use the field lr to filter"})
    assert response.status_code == 200
    after = client.get("/api/guidelines").json()["guidelines"]
    assert len(after) == len(before) + 1
    assert after[-1]["origin"] == "user"
    assert client.post("/api/guidelines", json={"text": "  "}).status_code == 400


def test_session_guidelines_scoped(chem_client):
    client, _ = chem_client
    client.post("/api/guidelines", json={"text": "session only rule", "session_id": "s1"})
    global_list = client.get("/api/guidelines").json()["guidelines"]
    assert all(g["text"] != "session only rule" for g in global_list)
    scoped = client.get("/api/guidelines", params={"session_id": "s1"}).json()["guidelines"]
    assert any(g["text"] == "session only rule" for g in scoped)


def test_chat_guideline_goes_to_session(chem_client):
    client, runtime = chem_client
    response = client.post(
        "/api/chat",
        json={"message": "guideline: prefer bond ids in answers", "session_id": "s2"},
    )
    assert response.status_code == 200
    assert any(
        g.text == "prefer bond ids in answers" for g in runtime.sessions["s2"].guidelines
    )
    assert all(g.text != "prefer bond ids in answers" for g in runtime.ctx.guidelines())


def test_anomalies_endpoint_newest_first(runtime):
    from provlens.anomaly import AnomalyMonitor, AnomalyPolicy
    from provlens.records import TaskRecord

    with TestClient(create_app(runtime)) as client:
        for i, value in enumerate([10.0] * 30 + [500.0]):
            runtime.hub.publish("tasks", [TaskRecord(
                task_id=f"an-{i}", activity_id="a", used={"v": value}, status="FINISHED",
            )])
        deadline = time.time() + 5
        while time.time() < deadline and len(runtime.ctx.buffer_view()) < 31:
            time.sleep(0.02)
        monitor = AnomalyMonitor(runtime.ctx, runtime.hub, AnomalyPolicy())
        published = monitor.sweep_once()
        assert len(published) == 1
        deadline = time.time() + 5
        while time.time() < deadline and not runtime.ctx.anomalies():
            time.sleep(0.02)
        doc = client.get("/api/anomalies").json()
        assert doc["anomalies"][0]["used"]["source_task_id"] == "an-30"


def test_agent_provenance_lands_in_store(chem_client):
    client, runtime = chem_client
    response = client.post(
        "/api/chat", json={"message": "which bond has the highest dissociation free energy?"}
    )
    assert response.status_code == 200
    ids = response.json()["provenance_task_ids"]
    assert ids
    deadline = time.time() + 5
    while time.time() < deadline and any(runtime.store.get(i) is None for i in ids):
        time.sleep(0.02)
    tool = runtime.store.get(ids[-1])
    assert tool is not None and tool.type == "task"
    assert tool.was_associated_with == "provenance-agent"
    llm_ids = [i for i in ids if runtime.store.get(i).type == "llm_interaction"]
    assert sorted(tool.was_informed_by) == sorted(llm_ids)


def test_stream_counts_synthetic_events(runtime):
    with TestClient(create_app(runtime)) as client:
        with client.websocket_connect("/api/stream") as ws:
            producer = BufferedProducer(
                runtime.hub, "tasks", FlushPolicy(max_buffer=16, max_interval_ms=20)
            )
            session = CaptureSession("c", "wf-stream", producer)
            run_synthetic(SyntheticSpec(n_inputs=10, seed=1), session)
            producer.close()
            got = []
            while len(got) < 51:
                event = ws.receive_json()
                if event["kind"] == "task" and event["payload"]["workflow_id"] == "wf-stream":
                    got.append(event["payload"]["task_id"])
            assert len(got) == len(set(got)) == 51


def test_stats_endpoint(chem_client):
    client, _ = chem_client
    doc = client.get("/api/stats").json()
    assert doc["buffer_size"] == 56
    assert "store" in doc


def test_demo_synthetic_endpoint(runtime):
    with TestClient(create_app(runtime)) as client:
        response = client.post("/api/demo/synthetic", json={"inputs": 4, "seed": 2})
        assert response.status_code == 200
        assert response.json()["records"] == 21
        deadline = time.time() + 5
        while time.time() < deadline and runtime.ctx.stats()["ingested"] < 21:
            time.sleep(0.02)
        assert runtime.ctx.stats()["ingested"] >= 21


def test_demo_anomaly_endpoint(tmp_path):
    rt = build_runtime(store_dir=None, llm_backend="mock", anomaly=True)
    try:
        with TestClient(create_app(rt)) as client:
            response = client.post("/api/demo/anomaly", json={})
            assert response.status_code == 200
            doc = response.json()
            assert len(doc["anomalies"]) == 1
            assert doc["anomalies"][0]["generated"]["value"] == 900.0
    finally:
        rt.shutdown()


def test_chat_provenance_queryable_via_store_source(chem_client):
    client, runtime = chem_client
    reply = client.post(
        "/api/chat", json={"message": "What is the mean bd_energy for bonds containing C-H?"}
    ).json()
    assert reply["kind"] == "table"
    deadline = time.time() + 5
    while time.time() < deadline and any(
        runtime.store.get(i) is None for i in reply["provenance_task_ids"]
    ):
        time.sleep(0.02)
    response = client.post("/api/query", json={"ir": {
        "source": "store",
        "filters": [["type", "eq", "llm_interaction"]],
        "aggregations": [["*", "count", "n"]],
    }})
    assert response.status_code == 200
    assert response.json()["rows"][0][0] >= 1
    tool_rows = client.post("/api/query", json={"ir": {
        "source": "store",
        "filters": [["was_associated_with", "eq", "provenance-agent"], ["type", "eq", "task"]],
        "projections": ["task_id", "activity_id"],
    }}).json()
    assert tool_rows["row_count"] >= 1
