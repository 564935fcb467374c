import json

from catfpca.cli import main
from catfpca.io import canonical_json, read_panel

TDS_EVENTS = """subject,product,descriptor,onset,offset
s1,p1,A,1.0,
s1,p1,B,4.0,
s2,p1,B,0.5,
s2,p1,A,3.0,
"""

TCATA_EVENTS = """subject,product,descriptor,onset,offset
s1,p1,A,1.0,3.0
s1,p1,B,2.0,5.0
s2,p1,A,2.5,
"""


def write_inputs(tmp_path, mode):
    events = tmp_path / "events.csv"
    events.write_text(TDS_EVENTS if mode == "TDS" else TCATA_EVENTS)
    meta = tmp_path / "meta.json"
    meta.write_text(json.dumps({
        "mode": mode,
        "states": ["A", "B"],
        "end_time": 10.0,
    }))
    return events, meta


def run(argv):
    return main([str(a) for a in argv])


def test_ingest_validate_mfpca_pipeline(tmp_path, capsys):
    events, meta = write_inputs(tmp_path, "TDS")
    out = tmp_path / "ingested"
    assert run(["ingest", events, "--meta", meta, "--out", out]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["total_warnings"] == 0
    assert report["n_items"] == 2

    assert run(["validate", out / "panel.csv"]) == 0

    res_dir = tmp_path / "mfpca"
    assert run(["mfpca", out / "panel.csv", "--out", res_dir]) == 0
    for name in ("result.json", "summary.txt", "scores.csv", "eigenfunctions.csv",
                 "bands.csv", "mean_curves.csv", "variance_curves.csv",
                 "selection_count.csv"):
        assert (res_dir / name).exists(), name
    result = json.loads((res_dir / "result.json").read_text())
    assert result["mode"] == "TDS"
    assert result["weights"]["scheme"] == "equal"
    assert len(result["eigenvalues"]) <= 1  # n = 2 caps the rank at 1


def test_tcata_ingest_counts_warnings(tmp_path):
    events, meta = write_inputs(tmp_path, "TCATA")
    out = tmp_path / "out"
    assert run(["ingest", events, "--meta", meta, "--out", out]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["warnings"]["unclosed_intervals"] == 1
    assert report["total_warnings"] >= 1


def test_overlapping_tds_rows_exit_code_2(tmp_path, capsys):
    events = tmp_path / "events.csv"
    events.write_text(
        "subject,product,descriptor,onset,offset\n"
        "bad1,p1,A,0.0,6.0\n"
        "bad1,p1,B,4.0,10.0\n"
    )
    meta = tmp_path / "meta.json"
    meta.write_text(json.dumps({"mode": "TDS", "states": ["A", "B"], "end_time": 10.0}))
    code = run(["ingest", events, "--meta", meta, "--out", tmp_path / "x"])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ProtocolError"
    assert "bad1" in err["message"]


def test_validate_exit_code_on_violation(tmp_path, capsys):
    # hand-written panel that claims normalization but breaks TDS exclusivity
    (tmp_path / "panel.csv").write_text(
        "subject,product,descriptor,onset,offset\n"
        "s1,p1,A,0.0,0.6\n"
        "s1,p1,B,0.4,1.0\n"
    )
    (tmp_path / "panel.json").write_text(canonical_json({
        "mode": "TCATA", "states": ["A", "B"], "end_time": 1.0,
        "items": [["s1", "p1"]], "normalized": True,
    }))
    # TCATA active at t=0? no; active at horizon? yes -> violation
    code = run(["validate", tmp_path / "panel.csv"])
    assert code == 2


def test_simulate_round_trip(tmp_path):
    spec = {
        "states": ["A", "B"],
        "horizon": 1.0,
        "initial": [0.5, 0.5],
        "transition": [[0.0, 1.0], [1.0, 0.0]],
        "sojourn": [{"dist": "exponential", "rate": 2.0}] * 2,
    }
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(spec))
    out = tmp_path / "sim"
    assert run(["simulate", "--spec", spec_path, "--n", 6, "--seed", 42, "--out", out]) == 0

    from catfpca import simulate_panel, ProcessSpec

    expected = simulate_panel(ProcessSpec.from_dict(spec), 6, 42)
    panel, _, meta = read_panel(out / "panel.csv")
    assert panel.mode == "TDS"
    assert len(panel.items) == 6
    for a, b in zip(expected.items, panel.items):
        assert a.trajectory == b.trajectory


def test_simulate_then_ingest_reproduces_panel(tmp_path):
    # unit-horizon TDS chain starts at its first click, so ingest only
    # re-parses; --tick 0 disables rounding for an exact round trip
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "states": ["A", "B"],
        "horizon": 1.0,
        "initial": [0.5, 0.5],
        "transition": [[0.0, 1.0], [1.0, 0.0]],
        "sojourn": [{"dist": "exponential", "rate": 3.0}] * 2,
    }))
    sim = tmp_path / "sim"
    run(["simulate", "--spec", spec_path, "--n", 8, "--seed", 5, "--out", sim])
    ingested = tmp_path / "ingested"
    assert run(["ingest", sim / "panel.csv", "--meta", sim / "panel.json",
                "--out", ingested, "--tick", 0]) == 0
    original, _, _ = read_panel(sim / "panel.csv")
    back, _, _ = read_panel(ingested / "panel.csv")
    for a, b in zip(original.items, back.items):
        assert a.trajectory == b.trajectory
        assert a.key == b.key


def test_oracle_check_command(tmp_path, capsys):
    events, meta = write_inputs(tmp_path, "TDS")
    out = tmp_path / "ingested"
    run(["ingest", events, "--meta", meta, "--out", out])
    assert run(["oracle-check", out / "panel.csv"]) == 0
    payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert payload["ok"] is True
    assert payload["cov_deviation"] <= 1e-12


def test_mfpca_outputs_are_byte_identical(tmp_path):
    events, meta = write_inputs(tmp_path, "TCATA")
    ingested = tmp_path / "ingested"
    run(["ingest", events, "--meta", meta, "--out", ingested])
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert run(["mfpca", ingested / "panel.csv", "--out", out1]) == 0
    assert run(["mfpca", ingested / "panel.csv", "--out", out2]) == 0
    files = sorted(p.name for p in out1.iterdir())
    assert files
    for name in files:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_config_file_with_flag_overrides(tmp_path):
    events, meta = write_inputs(tmp_path, "TDS")
    ingested = tmp_path / "ingested"
    run(["ingest", events, "--meta", meta, "--out", ingested])
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"weights": "trace_normalizing", "cells": 64}))
    out = tmp_path / "res"
    assert run(["mfpca", ingested / "panel.csv", "--out", out,
                "--config", cfg, "--weights", "equal"]) == 0
    result = json.loads((out / "result.json").read_text())
    assert result["weights"]["scheme"] == "equal"      # flag wins
    assert result["config"]["cells"] == 64             # file value kept


def test_config_rejects_conflicting_truncations(tmp_path, capsys):
    events, meta = write_inputs(tmp_path, "TDS")
    ingested = tmp_path / "ingested"
    run(["ingest", events, "--meta", meta, "--out", ingested])
    code = run(["mfpca", ingested / "panel.csv", "--out", tmp_path / "z",
                "--k", 1, "--var-frac", 0.9])
    assert code == 2


def test_missing_input_file_exits_2(tmp_path, capsys):
    assert run(["validate", tmp_path / "nope.csv"]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] in ("FileNotFoundError", "OSError")


def test_uniform_grid_policy(tmp_path):
    events, meta = write_inputs(tmp_path, "TCATA")
    ingested = tmp_path / "ingested"
    run(["ingest", events, "--meta", meta, "--out", ingested])
    out = tmp_path / "res"
    assert run(["mfpca", ingested / "panel.csv", "--out", out,
                "--grid", "uniform", "--cells", 16]) == 0
    result = json.loads((out / "result.json").read_text())
    assert result["grid"]["cells"] == 16
