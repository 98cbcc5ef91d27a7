import csv
import json

import pytest

from otasync import report
from otasync.cli import EXIT_BUDGET_FAIL, EXIT_INVALID, EXIT_OK, EXIT_USAGE, main
from otasync.scenario import ScenarioError, canonical_hash, load_schema, parse_scenario

NOISELESS = {"master_seed": 7, "n_trials": 30, "snr_db": 300, "channel": {"profile": "FLAT"}, "delay_samples": 205}

LINE3 = {
    "master_seed": 3,
    "budget": {"level": 1, "ota_ns": 30.4, "gateway_internal_ns": 50},
    "topology": {"nodes": [{"id": f"n{i}", "position": [10.0 * i, 0.0]} for i in range(1, 4)]},
    "ptp": {"clock": {"timestamp_jitter_sigma_ns": 20}},
}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def read_csv(path):
    lines = path.read_text().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    return comments, list(csv.reader(l for l in lines if not l.startswith("#")))


def test_schema_is_valid_json_schema():
    import jsonschema

    jsonschema.Draft202012Validator.check_schema(load_schema())


def test_parse_defaults():
    sc = parse_scenario({"master_seed": 1})
    assert sc.n_trials == 5000
    assert sc.trial.numerology.scs_khz == 15
    assert sc.trial.profile.name == "TDL-C" and sc.trial.profile.delay_spread_ns == 300.0
    assert sc.trial.link_budget is not None and sc.trial.snr_db is None
    assert sc.topology is None and sc.budget_level == 1


@pytest.mark.parametrize(
    "raw,field",
    [
        ({}, "master_seed"),
        ({"master_seed": "x"}, "master_seed"),
        ({"master_seed": 1, "scs_khz": 45}, "scs_khz"),
        ({"master_seed": 1, "channel": {"profile": "TDL-Q"}}, "channel.profile"),
        ({"master_seed": 1, "channel": {"delay_spread_ns": -1}}, "channel.delay_spread_ns"),
        ({"master_seed": 1, "topology": {"nodes": [{"id": "a"}]}}, "topology.nodes[0].position"),
        ({"master_seed": 1, "budget": {"level": 5}}, "budget.level"),
        ({"master_seed": 1, "snr_db": 3, "link_budget": {}}, "snr_db"),
        ({"master_seed": 1, "topology": {"nodes": [{"id": "a", "position": [0, 0]}], "chain_order": ["b"]}},
         "topology"),
    ],
)
def test_validation_names_field(raw, field):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(raw)
    assert exc.value.field == field
    assert str(exc.value).startswith(field)


def test_hash_is_canonical():
    assert canonical_hash({"a": 1, "b": [1, 2]}) == canonical_hash({"b": [1, 2], "a": 1})
    assert canonical_hash({"a": 1}) != canonical_hash({"a": 2})


def test_experiment_noiseless(tmp_path, capsys):
    sc = write(tmp_path, "s.json", NOISELESS)
    assert main(["experiment", "--scenario", sc, "--out-dir", str(tmp_path / "o"), "--workers", "1"]) == EXIT_OK
    payload = report.read_payload(tmp_path / "o" / "experiment.json")
    assert payload["p90_ns"] == 0.0
    assert payload["master_seed"] == 7
    assert payload["scenario_hash"] == canonical_hash(NOISELESS)
    assert (tmp_path / "o" / "experiment.png").stat().st_size > 0
    assert json.loads(capsys.readouterr().out)["p90_ns"] == 0.0


def test_experiment_rerun_payload_identical(tmp_path):
    raw = {"master_seed": 5, "n_trials": 12, "snr_db": -3.0, "scs_khz": 30}
    sc = write(tmp_path, "s.json", raw)
    for d in ("a", "b"):
        assert main(["experiment", "--scenario", sc, "--out-dir", str(tmp_path / d), "--no-plots"]) == EXIT_OK
    a = json.loads((tmp_path / "a" / "experiment.json").read_text())
    b = json.loads((tmp_path / "b" / "experiment.json").read_text())
    assert report.payload_bytes(a["payload"]) == report.payload_bytes(b["payload"])
    assert set(a) == {"payload", "run_info"} and "generated_at" in a["run_info"]


def test_plotdata_csv(tmp_path):
    sc = write(tmp_path, "s.json", {**NOISELESS, "n_trials": 10})
    assert main(["plotdata", "--scenario", sc, "--out-dir", str(tmp_path)]) == EXIT_OK
    comments, rows = read_csv(tmp_path / "error_cdf.csv")
    assert comments == [f"# scenario_hash={canonical_hash({**NOISELESS, 'n_trials': 10})}", "# master_seed=7"]
    assert rows[0] == ["rank", "error_ns", "cdf"]
    assert len(rows) == 11 and float(rows[-1][2]) == 1.0
    assert (tmp_path / "error_cdf.png").exists()


def test_distribute_pass_and_strict_fail(tmp_path, capsys):
    sc = write(tmp_path, "ok.json", LINE3)
    assert main(["distribute", "--scenario", sc, "--strict", "--out-dir", str(tmp_path / "ok")]) == EXIT_OK
    payload = report.read_payload(tmp_path / "ok" / "distribution.json")
    assert payload["verdict"]["passed"] is True
    assert [n["id"] for n in payload["nodes"]] == ["n1", "n2", "n3"]
    assert all(n["total_ns"] == pytest.approx(80.4 + abs(n["distribution_ns"])) for n in payload["nodes"])
    _, rows = read_csv(tmp_path / "ok" / "distribution.csv")
    assert rows[0] == ["node_id", "distribution_ns", "total_ns", "margin_ns"] and len(rows) == 4

    bad = write(tmp_path, "bad.json", {**LINE3, "budget": {"level": 1, "ota_ns": 899.0, "gateway_internal_ns": 50}})
    assert main(["distribute", "--scenario", bad, "--out-dir", str(tmp_path / "b")]) == EXIT_OK
    assert main(["distribute", "--scenario", bad, "--strict", "--out-dir", str(tmp_path / "b")]) == EXIT_BUDGET_FAIL
    assert "FAIL (budget)" in capsys.readouterr().out


def test_distribute_runs_experiment_for_ota(tmp_path):
    raw = {**LINE3, **{k: v for k, v in NOISELESS.items() if k != "master_seed"}, "budget": {"level": 2}}
    sc = write(tmp_path, "s.json", raw)
    assert main(["distribute", "--scenario", sc, "--out-dir", str(tmp_path), "--no-plots"]) == EXIT_OK
    payload = report.read_payload(tmp_path / "distribution.json")
    assert payload["ota_source"] == "experiment_p90" and payload["ota_ns"] == 0.0


def test_distribute_requires_topology(tmp_path, capsys):
    sc = write(tmp_path, "s.json", {"master_seed": 1})
    assert main(["distribute", "--scenario", sc, "--out-dir", str(tmp_path)]) == EXIT_INVALID
    assert "topology" in capsys.readouterr().err


@pytest.mark.parametrize(
    "content,field",
    [("{not json", "scenario"), (json.dumps({"n_trials": 3}), "master_seed"),
     (json.dumps({"master_seed": 1, "channel": {"profile": "nope"}}), "channel.profile")],
)
def test_invalid_scenario_exit_code(tmp_path, capsys, content, field):
    p = tmp_path / "s.json"
    p.write_text(content)
    assert main(["experiment", "--scenario", str(p), "--out-dir", str(tmp_path)]) == EXIT_INVALID
    assert field in capsys.readouterr().err


def test_missing_scenario_file(tmp_path, capsys):
    assert main(["experiment", "--scenario", str(tmp_path / "none.json")]) == EXIT_INVALID


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == EXIT_USAGE
    assert "usage:" in capsys.readouterr().err
    assert main([]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["table2", "--seed", "1"])
    assert exc.value.code == EXIT_USAGE


def test_table2_small_run_layout(tmp_path, capsys):
    cal = tmp_path / "cal.json"
    report.write_json(cal, {"link_budget": {"reference_snr_db_at_1km": 0.0}})
    out = tmp_path / "t2"
    assert main(["table2", "--seed", "42", "--calibration", str(cal), "--trials", "8", "--out-dir", str(out)]) == EXIT_OK
    comments, rows = read_csv(out / "table2.csv")
    assert comments[1] == "# master_seed=42"
    assert rows[0] == ["scs_khz", "p90_ns_1km", "p90_ns_3km"]
    assert [r[0] for r in rows[1:]] == ["15", "30", "60"]
    payload = report.read_payload(out / "table2.json")
    assert len(payload["cells"]) == 6 and payload["master_seed"] == 42
    assert (out / "table2.png").exists() and (out / "table2_cells.csv").exists()
    assert "p90_ns_1km" in capsys.readouterr().out


@pytest.mark.parametrize(
    "payload,field",
    [({}, "calibration.link_budget"), ({"link_budget": {"anchor": 1}}, "calibration.link_budget.anchor"),
     ({"link_budget": {}}, "calibration.link_budget.reference_snr_db_at_1km")],
)
def test_table2_bad_calibration(tmp_path, capsys, payload, field):
    cal = tmp_path / "cal.json"
    report.write_json(cal, payload)
    assert main(["table2", "--seed", "1", "--calibration", str(cal), "--trials", "2", "--out-dir", str(tmp_path)]) == EXIT_INVALID
    assert field in capsys.readouterr().err


def test_calibrate_small(tmp_path):
    out = tmp_path / "cal.json"
    rc = main(["calibrate", "--target-p90-ns", "40", "--trials", "60", "--seed", "1", "--rel-tol", "0.1",
               "--out", str(out)])
    assert rc == EXIT_OK
    payload = report.read_payload(out)
    assert payload["link_budget"]["reference_snr_db_at_1km"] == payload["anchor_snr_db"]
    assert payload["provenance"]["channel_profile"] == "TDL-C"
    assert payload["master_seed"] == 1 and "scenario_hash" in payload


def test_calibrate_unreachable_target(tmp_path, capsys):
    rc = main(["calibrate", "--target-p90-ns", "0.001", "--trials", "5", "--out", str(tmp_path / "c.json")])
    assert rc == EXIT_INVALID
    assert "target_p90_ns" in capsys.readouterr().err


def test_bundled_scenarios_validate():
    from pathlib import Path

    from otasync.scenario import load_scenario

    files = sorted((Path(__file__).parent.parent / "scenarios").glob("*.json"))
    assert files
    for f in files:
        assert load_scenario(f).master_seed >= 0
