import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from hitbounds import cli, precise_continuous
from hitbounds.cli import load_model
from hitbounds.errors import ModelFormatError

from conftest import RUNNING_LOWER, RUNNING_UPPER, make_running_model

RUNNING_JSON = {
    "states": ["s0", "s1", "s2"],
    "target": ["s2"],
    "bounds": [
        {"from": "s0", "to": "s1", "lower": 1.0, "upper": 2.0},
        {"from": "s0", "to": "s2", "lower": 0.5, "upper": 1.0},
        {"from": "s1", "to": "s0", "lower": 0.0, "upper": 1.0},
        {"from": "s1", "to": "s2", "lower": 1.0, "upper": 3.0},
    ],
}


def write_model(tmp_path, doc, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run(argv):
    try:
        cli.main(list(argv))
    except SystemExit as exc:
        return int(exc.code)
    return 0


def _schema(name):
    return json.loads(resources.files("hitbounds").joinpath(
        f"schemas/{name}").read_text())


# ---------------------------------------------------------------------------
# model loading


def test_load_model_round_trip(tmp_path):
    path = write_model(tmp_path, RUNNING_JSON)
    model, digest = load_model(path)
    ref = make_running_model()
    np.testing.assert_array_equal(model.rates.lower, ref.rates.lower)
    np.testing.assert_array_equal(model.rates.upper, ref.rates.upper)
    assert model.space.labels == ref.space.labels
    assert digest.startswith("sha256:") and len(digest) == 71


def test_model_hash_ignores_bound_order(tmp_path):
    doc = dict(RUNNING_JSON, bounds=list(reversed(RUNNING_JSON["bounds"])))
    _, d1 = load_model(write_model(tmp_path, RUNNING_JSON, "a.json"))
    _, d2 = load_model(write_model(tmp_path, doc, "b.json"))
    assert d1 == d2


def test_load_model_missing_target_names_field(tmp_path):
    doc = {k: v for k, v in RUNNING_JSON.items() if k != "target"}
    path = write_model(tmp_path, doc)
    with pytest.raises(ModelFormatError, match="target"):
        load_model(path)


def test_load_model_rejects_unknown_field(tmp_path):
    doc = dict(RUNNING_JSON, rates=[])
    with pytest.raises(ModelFormatError, match="rates"):
        load_model(write_model(tmp_path, doc))


def test_load_model_rejects_duplicate_pair(tmp_path):
    doc = dict(RUNNING_JSON)
    doc["bounds"] = RUNNING_JSON["bounds"] + [RUNNING_JSON["bounds"][0]]
    with pytest.raises(ModelFormatError, match="duplicate"):
        load_model(write_model(tmp_path, doc))


def test_model_file_matches_published_schema(tmp_path):
    jsonschema.validate(RUNNING_JSON, _schema("model.schema.json"))


# ---------------------------------------------------------------------------
# check


def test_check_valid_model(tmp_path, capsys):
    code = run(["check", write_model(tmp_path, RUNNING_JSON)])
    out = capsys.readouterr().out
    assert code == 0
    assert "witness s0: s0 -> s2" in out
    assert "verdict: valid" in out


def test_check_missing_field_exit_2(tmp_path, capsys):
    doc = {k: v for k, v in RUNNING_JSON.items() if k != "target"}
    code = run(["check", write_model(tmp_path, doc)])
    err = capsys.readouterr().err
    assert code == 2
    assert "target" in err


def test_check_unreachable_exit_2(tmp_path, capsys):
    doc = dict(RUNNING_JSON)
    doc["bounds"] = [dict(b, lower=0.0) for b in RUNNING_JSON["bounds"]]
    code = run(["check", write_model(tmp_path, doc)])
    captured = capsys.readouterr()
    assert code == 2
    joined = captured.out + captured.err
    assert "s0" in joined and "s1" in joined


def test_check_malformed_json_exit_2(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert run(["check", str(path)]) == 2


def test_missing_file_is_usage_error(capsys):
    assert run(["check", "/nonexistent/model.json"]) == 1


def test_unknown_option_is_usage_error(capsys):
    assert run(["solve", "--frobnicate"]) == 1


def test_version_flag(capsys):
    assert run(["--version"]) == 0
    assert "hitbounds" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# solve


def test_solve_running_example(tmp_path, capsys):
    path = write_model(tmp_path, RUNNING_JSON)
    code = run(["solve", path, "--method", "both", "--tol", "1e-8"])
    out = capsys.readouterr().out
    assert code == 0
    assert "lower: s0=0.5555555" in out
    assert "upper: s0=1.4999999" in out or "upper: s0=1.5" in out
    assert "agreement: vi vs pi" in out
    assert "certificate (lower):" in out


def test_solve_json_report_validates(tmp_path):
    path = write_model(tmp_path, RUNNING_JSON)
    out_json = str(tmp_path / "report.json")
    assert run(["solve", path, "--json", out_json]) == 0
    report = json.load(open(out_json))
    jsonschema.validate(report, _schema("run_report.schema.json"))
    assert report["command"] == "solve"
    res = report["results"]
    np.testing.assert_allclose(res["lower"], RUNNING_LOWER, atol=1e-6)
    np.testing.assert_allclose(res["upper"], RUNNING_UPPER, atol=1e-6)
    assert "certificate_lower" in res and "certificate_upper" in res
    assert res["agreement_rel_diff"] <= res["agreement_tol"]


def test_solve_singleton_lower_equals_upper(tmp_path):
    doc = dict(RUNNING_JSON)
    doc["bounds"] = [dict(b, upper=b["lower"]) for b in RUNNING_JSON["bounds"]
                     if b["lower"] > 0]
    path = write_model(tmp_path, doc)
    out_json = str(tmp_path / "r.json")
    assert run(["solve", path, "--json", out_json]) == 0
    res = json.load(open(out_json))["results"]
    model = make_running_model()
    h = precise_continuous(model.rates.all_lower(), model.target)
    np.testing.assert_allclose(res["lower"], res["upper"], atol=1e-9)
    np.testing.assert_allclose(res["lower"], h, atol=1e-6)


def test_solve_vi_only_has_no_certificates(tmp_path, capsys):
    path = write_model(tmp_path, RUNNING_JSON)
    assert run(["solve", path, "--method", "vi"]) == 0
    out = capsys.readouterr().out
    assert "certificate" not in out
    assert "agreement" not in out


# ---------------------------------------------------------------------------
# converge


def test_converge_member_fit_and_csv(tmp_path, capsys):
    path = write_model(tmp_path, RUNNING_JSON)
    csv_path = tmp_path / "study.csv"
    code = run(["converge", path, "--member", "all-lower",
                "--deltas", "0.2,0.1,0.05,0.025", "--csv", str(csv_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "fitted order" in out
    fitted = float(out.split("fitted order:")[1].split()[0])
    assert 0.8 <= fitted <= 1.2
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "delta,error,ratio"
    assert len(lines) == 5
    first = lines[1].split(",")
    assert first[0] == "0.2" and first[2] == ""
    # successive-error ratios present from the second row on
    assert float(lines[2].split(",")[2]) > 1.0


def test_converge_single_delta_skips_fit(tmp_path, capsys):
    path = write_model(tmp_path, RUNNING_JSON)
    code = run(["converge", path, "--member", "all-upper", "--deltas", "0.1"])
    out = capsys.readouterr().out
    assert code == 0
    assert "skipped" in out


def test_converge_imprecise_monotone(tmp_path, capsys):
    path = write_model(tmp_path, RUNNING_JSON)
    code = run(["converge", path, "--deltas", "0.2,0.1,0.05",
                "--orientation", "lower"])
    out = capsys.readouterr().out
    assert code == 0
    errs = [float(line.split("error=")[1].split()[0])
            for line in out.splitlines() if "error=" in line]
    assert len(errs) == 3
    assert errs[0] > errs[1] > errs[2]


def test_converge_rejects_bad_grid(tmp_path, capsys):
    path = write_model(tmp_path, RUNNING_JSON)
    assert run(["converge", path, "--deltas", "0.1,0.2"]) == 1


# ---------------------------------------------------------------------------
# simulate


def test_simulate_hm_inside_band(tmp_path, capsys):
    path = write_model(tmp_path, RUNNING_JSON)
    code = run(["simulate", path, "--regime", "hm", "--paths", "20000",
                "--seed", "3", "--threads", "2"])
    out = capsys.readouterr().out
    assert code == 0
    assert "verdict: inside band" in out


def test_simulate_reproducible_results(tmp_path):
    path = write_model(tmp_path, RUNNING_JSON)
    reports = []
    for name in ("a.json", "b.json"):
        out_json = str(tmp_path / name)
        assert run(["simulate", path, "--regime", "i", "--paths", "5000",
                    "--seed", "11", "--json", out_json]) == 0
        reports.append(json.load(open(out_json)))
    assert reports[0]["results"] == reports[1]["results"]
    assert reports[0]["seed"] == 11


def test_simulate_thread_count_does_not_change_results(tmp_path):
    path = write_model(tmp_path, RUNNING_JSON)
    results = []
    for threads, name in ((1, "t1.json"), (4, "t4.json")):
        out_json = str(tmp_path / name)
        assert run(["simulate", path, "--regime", "m", "--paths", "5000",
                    "--seed", "5", "--threads", str(threads),
                    "--json", out_json]) == 0
        results.append(json.load(open(out_json))["results"])
    assert results[0] == results[1]


def test_simulate_adversarial_tracks_lower(tmp_path, capsys):
    path = write_model(tmp_path, RUNNING_JSON)
    code = run(["simulate", path, "--regime", "i", "--policy",
                "adversarial-lower", "--paths", "40000", "--seed", "1"])
    out = capsys.readouterr().out
    assert code == 0
    assert "tracks the lower bound within 3*CI" in out


def test_simulate_all_censored_exit_3(tmp_path, capsys):
    path = write_model(tmp_path, RUNNING_JSON)
    code = run(["simulate", path, "--regime", "hm", "--paths", "50",
                "--seed", "0", "--horizon", "1e-9"])
    err = capsys.readouterr().err
    assert code == 3
    assert "horizon" in err


def test_simulate_start_option(tmp_path, capsys):
    path = write_model(tmp_path, RUNNING_JSON)
    code = run(["simulate", path, "--regime", "hm", "--paths", "2000",
                "--seed", "2", "--start", "s1"])
    out = capsys.readouterr().out
    assert code == 0
    assert "start: s1" in out


# ---------------------------------------------------------------------------
# diagnose


def test_diagnose_prints_constants(tmp_path, capsys):
    path = write_model(tmp_path, RUNNING_JSON)
    code = run(["diagnose", path, "--quasi-members", "2", "--seed", "0"])
    out = capsys.readouterr().out
    assert code == 0
    assert "q  = 0.5" in out
    assert "xi = " in out and "M = " in out
    assert "holds on the grid" in out
    assert "quasicontractivity" in out and "passed" in out


def test_diagnose_unreachable_exit_2(tmp_path, capsys):
    doc = dict(RUNNING_JSON)
    doc["bounds"] = [dict(b, lower=0.0) for b in RUNNING_JSON["bounds"]]
    assert run(["diagnose", write_model(tmp_path, doc)]) == 2


def test_diagnose_json_round_trips_schema(tmp_path):
    path = write_model(tmp_path, RUNNING_JSON)
    out_json = str(tmp_path / "diag.json")
    assert run(["diagnose", path, "--json", out_json]) == 0
    report = json.load(open(out_json))
    jsonschema.validate(report, _schema("run_report.schema.json"))
    assert report["results"]["q"] < 1
    assert report["results"]["envelope_ok"] is True
