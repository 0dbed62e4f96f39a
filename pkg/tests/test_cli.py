from __future__ import annotations

import json

import pytest

from provlens.capture import chemistry_trace_path
from provlens.cli import main


def test_synth_command(tmp_path, capsys):
    store = tmp_path / "store"
    assert main(["synth", "--inputs", "10", "--seed", "3", "--store", str(store)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["records"] == 51
    assert out["store"]["records"] == 51


def test_replay_command(tmp_path, capsys):
    store = tmp_path / "store"
    assert main([
        "replay", "--file", str(chemistry_trace_path()), "--rate", "max",
        "--store", str(store),
    ]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["published"] == 56
    assert out["store"]["records"] == 56


def test_query_command(tmp_path, capsys):
    store = tmp_path / "store"
    main(["synth", "--inputs", "5", "--seed", "1", "--store", str(store)])
    capsys.readouterr()
    ir_file = tmp_path / "q.json"
    ir_file.write_text(json.dumps({
        "source": "store",
        "group_by": ["activity_id"],
        "aggregations": [["*", "count", "n"]],
        "sort": [["n", "desc"], ["activity_id", "asc"]],
    }))
    assert main(["query", "--ir", str(ir_file), "--store", str(store)]) == 0
    out = json.loads(capsys.readouterr().out)
    counts = dict(out["rows"])
    assert counts == {"generate": 5, "square": 5, "cube": 5, "scale": 5, "reduce": 5, "report": 1}


def test_query_command_text_form(tmp_path, capsys):
    store = tmp_path / "store"
    main(["synth", "--inputs", "3", "--seed", "1", "--store", str(store)])
    capsys.readouterr()
    ir_file = tmp_path / "q.txt"
    ir_file.write_text('SELECT count(*) AS n FROM store WHERE activity_id = "reduce"')
    assert main(["query", "--ir", str(ir_file), "--store", str(store)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["rows"] == [[3]]


def test_store_stats_command(tmp_path, capsys):
    store = tmp_path / "store"
    main(["synth", "--inputs", "4", "--seed", "1", "--store", str(store)])
    capsys.readouterr()
    assert main(["store", "stats", "--path", str(store)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["records"] == 21
    assert out["activities"]["report"] == 1


def test_eval_command_small(tmp_path, capsys):
    assert main([
        "eval", "--configs", "Baseline,Full", "--model", "mock",
        "--judge", "oracle", "--reps", "1", "--out", str(tmp_path / "out"),
    ]) == 0
    output = capsys.readouterr().out
    assert "Full" in output and "Baseline" in output
    assert (tmp_path / "out" / "records.csv").exists()
    assert (tmp_path / "out" / "scores_by_config.png").exists()


def test_bad_query_file(tmp_path, capsys):
    store = tmp_path / "store"
    main(["synth", "--inputs", "1", "--store", str(store)])
    capsys.readouterr()
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    assert main(["query", "--ir", str(bad), "--store", str(store)]) == 2


def test_missing_store_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        main(["store", "stats", "--path", str(tmp_path / "nothing")])
