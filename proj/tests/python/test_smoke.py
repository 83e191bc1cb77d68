import json
import math

import pytest

import devmine


LISTING = {
    "team": "Team-10", "session": "S01",
    "timestamp_begin": "2019-03-04 10:00:00.000", "timestamp_end": "2019-03-04 10:00:01.500",
    "fullname": "Dev One", "username": "dev1", "workspacename": "ws", "projectname": "jhotdraw",
    "filename": "Figure.java", "extension": "java", "categoryName": "Eclipse Editor",
    "commandName": "File Editing", "categoryID": "c", "commandID": "cmd.edit",
    "platform_branch": "4.7", "platform_version": "4.7.3", "java": "1.8", "continent": "Europe",
    "country": "Portugal", "city": "Lisbon", "os_name": "Linux", "perspective": "Java",
    "hash": "0" * 32,
}


def test_parse_and_hash_roundtrip():
    events, report = devmine.parse_events(json.dumps(LISTING) + "\n")
    assert report["parsed"] == 1 and report["accepted"] == 1
    e = events[0]
    assert e.team == "Team-10" and e.command_name == "File Editing"
    e.hash = devmine.compute_event_hash(e)
    assert devmine.verify_event_hash(e)
    e.filename = "Figur3.java"
    assert not devmine.verify_event_hash(e)


def test_discovery_and_pcc_on_synthetic_scenario():
    scenario = devmine.generate(seed=7)
    events, report = devmine.parse_events(scenario["events_jsonl"])
    assert report["rejected"] == 0 and report["hash_failures"] == 0
    log = devmine.build_log(devmine.deduplicate(events))
    assert log.event_count == len(events)
    team = log.team(log.teams()[0])
    model = devmine.discover_model(team)
    ts = model.level(2)
    arcs, nodes = len(ts.arcs), len(ts.nodes)
    assert devmine.compute_pcc(ts) == arcs - nodes + 2
    metrics = devmine.process_metrics(team, model)
    assert metrics["PCC"] == devmine.compute_pcc(ts)
    assert metrics["NOA"] == metrics["NSS"] + metrics["NCS"]
    assert devmine.export_dot(ts).startswith("digraph")


def test_spearman_and_partition():
    assert devmine.spearman_rho([1, 2, 3], [6, 4, 5]) == pytest.approx(-0.5)
    assert devmine.spearman_p_value(1.0, 5, "exact") == pytest.approx(2 / 120)
    r = devmine.spearman([1, 2, 3, 4, 5, 6], [2, 1, 4, 3, 6, 5])
    assert -1 <= r["rho"] <= 1 and r["significant"] == (r["p_value"] < 0.05)
    p = devmine.level_partition([0.0, 0.1, 10.0, 10.1], 2, seed=1)
    assert p["assigned"] == ["LOW", "LOW", "HIGH", "HIGH"]


def test_evaluate_and_classifier():
    assert devmine.roc_auc([0.6, 0.35, 0.8, 0.4], [1, 1, 1, 0], 1) == pytest.approx(2 / 3)
    X = [[float(i), float(i % 3)] for i in range(40)]
    y = ["A" if i < 20 else "B" for i in range(40)]
    cv = devmine.cross_validate(["x", "z"], X, y, family="logistic", folds=5, seed=3)
    assert cv["weighted"]["roc_auc"] > 0.95
    model = devmine.train(["x", "z"], X, y, family="forest", seed=3, trees=5)
    proba = model.predict_proba(X)
    assert all(math.isclose(sum(row), 1.0) for row in proba)
    again = devmine.TrainedModel.from_json(model.to_json())
    assert again.predict(X) == model.predict(X)
    imp = devmine.cv_permutation_importance(["x", "z"], X, y, folds=5, repeats=3, seed=3, trees=5)
    assert imp["x"] == 1.0 and imp["z"] < imp["x"]


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(devmine.ConfigError):
        devmine.parse_events("", "xml")
    with pytest.raises(devmine.DataError):
        devmine.spearman_rho([1, 1, 1], [1, 2, 3])
    with pytest.raises(devmine.InputError):
        devmine.run_stage("discover", [tmp_path / "missing.jsonl"], tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_pipeline_runs_from_python(tmp_path):
    syn = tmp_path / "syn"
    devmine.run_stage("synth", out=syn, seed=3)
    written = devmine.run_stage("pipeline", [syn], tmp_path / "run", seed=3, folds=5, grid=False)
    assert "summary.md" in written
    summary = (tmp_path / "run" / "summary.md").read_text()
    assert "MR > AR" in summary
