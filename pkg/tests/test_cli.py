import csv
import json

import numpy as np
import pytest

from fuzzyglucose.cli import (
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    EXIT_OK,
    EXIT_USAGE,
    OUT_ENV,
    load_config,
    run,
)


@pytest.fixture(scope="module")
def gains_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("syn")
    assert run(["synthesize", "--model", "bergman", "--preset", "sat6", "--out-dir", str(out)]) == 0
    return out


def test_synthesize_writes_two_rules(gains_dir):
    data = json.loads((gains_dir / "gains.json").read_text())
    assert len(data["rules"]) == 2
    assert all(np.isfinite(r["gamma"]) for r in data["rules"])
    assert data["options"]["mu"] == 0.095


def test_simulate_and_roundtrip(gains_dir, tmp_path):
    rc = run(["simulate", "--model", "bergman", "--alpha", "1", "--gains",
              str(gains_dir / "gains.json"), "--out-dir", str(tmp_path), "--t-end", "100"])
    assert rc == EXIT_OK
    with open(tmp_path / "trace.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert ",".join(rows[0]) == "t,x1,x2,x3,h1,h2,u_cmd,u_pump,u_applied,v,y,V"
    u_pump = np.array([float(r[rows[0].index("u_pump")]) for r in rows[1:]])
    assert np.all((u_pump >= 0) & (u_pump <= 6.0))
    first = (tmp_path / "trace.csv").read_bytes()
    assert run(["simulate", "--model", "bergman", "--alpha", "1", "--gains",
                str(gains_dir / "gains.json"), "--out-dir", str(tmp_path), "--t-end", "100"]) == 0
    assert (tmp_path / "trace.csv").read_bytes() == first


def test_verify(gains_dir, tmp_path):
    assert run(["verify", "--model", "bergman", "--gains", str(gains_dir / "gains.json"),
                "--out-dir", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "verification.json").read_text())
    assert rep["passed"]
    assert all(r["hinf_norm"] <= r["gamma"] + 1e-4 for r in rep["rules"])


def test_sweep_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path))
    assert run(["sweep", "--model", "bergman"]) == EXIT_OK
    with open(tmp_path / "sweep.csv", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9
    for alpha in ("1.0", "2.0", "3.0"):
        peaks = [float(r["peak_glucose"]) for r in rows if r["alpha"] == alpha]
        assert all(a >= b for a, b in zip(peaks, peaks[1:]))


def test_usage_errors(capsys):
    assert run([]) == EXIT_USAGE
    assert run(["frobnicate"]) == EXIT_USAGE
    assert run(["synthesize", "--bogus"]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["synthesize", "--config", str(bad), "--out-dir", str(tmp_path)]) == EXIT_CONFIG
    bad.write_text(json.dumps({"model": "bergman", "colour": 1}))
    assert run(["synthesize", "--config", str(bad), "--out-dir", str(tmp_path)]) == EXIT_CONFIG
    bad.write_text(json.dumps({"model": "bergman", "synthesis": {"preset": "sat99"}}))
    assert run(["synthesize", "--config", str(bad), "--out-dir", str(tmp_path)]) == EXIT_CONFIG
    bad.write_text(json.dumps({"model": "bergman", "params": {"p2": -1}}))
    assert run(["synthesize", "--config", str(bad), "--out-dir", str(tmp_path)]) == EXIT_CONFIG


def test_infeasible_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": "bergman",
                               "synthesis": {"mu": 1e-4, "x0": [30.0, 0.0, 0.0]}}))
    assert run(["synthesize", "--config", str(cfg), "--out-dir", str(tmp_path)]) == EXIT_INFEASIBLE


def test_config_file_fields(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "model": "tolic", "sector_bounds": "published", "params": {"b_u": 2.0},
        "synthesis": {"preset": "sat12"}, "simulation": {"alpha": 2, "t_end": 50},
    }))
    rc = load_config(cfg)
    assert rc.resolved_mu() == 0.08 and rc.resolved_u_max() == 12.0
    _, ts = rc.build()
    assert ts.premise_bounds[0] == (-0.0057, 0.0057)
    assert rc.sim_config().alpha == 2
