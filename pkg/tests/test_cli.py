from __future__ import annotations

import csv
import json

import pytest

from glauber_sofic.cli import ConfigError, ExperimentConfig, apply_seed_override, main

BASE = {
    "group": {"family": "free", "r": 1, "r_max": 6},
    "model": {"preset": "ising", "beta": 0.5},
    "homs": {"kind": "cycles", "sizes": [4, 6]},
    "dynamics": {"times": [0.0, 0.25], "trajectories": 2, "initial": {"kind": "uniform"}},
    "fed": {"R": 1, "epsilons": [0.9, 0.6], "target": {"kind": "chain_gibbs"}},
    "diagnose": {"R": 2},
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=2))
    return str(path)


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    return list(csv.DictReader(lines[1:]))


def test_sofic_table_and_determinism(tmp_path):
    cfg = write(tmp_path, BASE)
    assert main(["sofic", "--config", cfg, "--out", str(tmp_path / "a"), "--workers", "1"]) == 0
    assert main(["sofic", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    a, b = (tmp_path / "a" / "sofic.csv"), (tmp_path / "b" / "sofic.csv")
    assert a.read_bytes() == b.read_bytes()
    rows = read_csv(a)
    assert [r["n"] for r in rows] == ["4", "6"]
    # a 6-cycle matches the Cayley ball up to radius 2
    assert rows[1]["R_star"] == "2" and float(rows[1]["Delta"]) == pytest.approx(4.0)
    summary = json.loads((tmp_path / "a" / "sofic_summary.json").read_text())
    assert summary["R_max"] == 6 and set(summary["median_Delta"]) == {"4", "6"}


def test_simulate_outputs(tmp_path):
    cfg = write(tmp_path, dict(BASE, homs={"kind": "cycles", "sizes": [4]}))
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
    snap = json.loads((out / "state_n4_t0.25.json").read_text())
    assert sum(snap["probs"].values()) == pytest.approx(1.0)
    assert set(snap["probs"]) <= {str(i) for i in range(16)}
    traj = read_csv(out / "trajectory_n4_run1.csv")
    assert all(0 <= float(r["time"]) <= 0.25 for r in traj)
    fe = read_csv(out / "free_energy.csv")
    assert float(fe[1]["free_energy"]) <= float(fe[0]["free_energy"]) + 1e-12
    first = (out / "trajectory_n4_run0.csv").read_bytes()
    assert main(["simulate", "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
    assert (out / "trajectory_n4_run0.csv").read_bytes() == first


def test_fed_and_diagnose(tmp_path):
    cfg = write(tmp_path, BASE)
    out = tmp_path / "f"
    assert main(["fed", "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
    rows = read_csv(out / "fed_table.csv")
    assert list(rows[0]) == ["n", "epsilon", "R", "value_or_inf", "status", "residual"]
    summary = json.loads((out / "fed_summary.json").read_text())
    assert summary["monotone_in_eps"] and summary["bounds_ok"]
    assert main(["diagnose", "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
    report = json.loads((out / "gibbs_report.json").read_text())
    assert report["target"]["verdict"] == "ConsistentToDepth(2)"


def test_diagnose_product_violation(tmp_path):
    cfg = dict(BASE, fed={"target": {"kind": "product", "p": [0.2, 0.8]}})
    path = write(tmp_path, cfg)
    assert main(["diagnose", "--config", path, "--out", str(tmp_path), "--workers", "1"]) == 0
    report = json.loads((tmp_path / "gibbs_report.json").read_text())
    assert report["target"]["verdict"] == "Violation"
    assert report["target"]["witness"]["deficit"] > 0


def test_verify_suite_pass(tmp_path, capsys):
    path = write(tmp_path, BASE)
    assert main(["verify", "delta", "--config", path, "--out", str(tmp_path), "--workers", "1"]) == 0
    assert "[PASS] criterion 7" in capsys.readouterr().out
    assert json.loads((tmp_path / "verify_delta.json").read_text())["passed"]


def test_verify_suite_failure_exit_code(tmp_path):
    # an unreachable threshold for the product statistic forces a failed check
    cfg = dict(BASE, verify={"delta": {"strict": -10.0}})
    path = write(tmp_path, cfg)
    assert main(["verify", "delta", "--config", path, "--out", str(tmp_path), "--workers", "1"]) == 1


def test_unknown_suite_is_usage_error(tmp_path):
    path = write(tmp_path, BASE)
    with pytest.raises(SystemExit) as exc:
        main(["verify", "nosuch", "--config", path])
    assert exc.value.code == 2


def test_asymmetric_J_reports_line_and_cell(tmp_path, capsys):
    text = """{
  "group": {"family": "free", "r": 1},
  "model": {"J": [[0.0, 1.0],
                  [2.0, 0.0]],
            "h": [0.0, 0.0]}
}
"""
    path = tmp_path / "bad.json"
    path.write_text(text)
    assert main(["sofic", "--config", str(path), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "model.J[0][1]" in err


def test_asymmetric_J_second_row(tmp_path):
    text = '{\n "model": {"J": [\n   [0, 1, 0],\n   [1, 0, 5],\n   [0, 0, 0]\n ], "h": [0, 0, 0]}\n}\n'
    path = tmp_path / "bad.json"
    path.write_text(text)
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.load(path)
    assert exc.value.line == 4 and exc.value.path == "model.J[1][2]"


def test_other_config_errors(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "group": {"family": "free",\n  "r": }\n}\n')
    assert main(["sofic", "--config", str(p), "--out", str(tmp_path)]) == 2
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.load(p)
    assert exc.value.line == 3
    bad_group = write(tmp_path, dict(BASE, group={"family": "mystery", "r": 1}), "g.json")
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.load(bad_group)
    assert exc.value.path == "group" and exc.value.line == 2
    assert main(["sofic", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_seed_override(tmp_path):
    raw = dict(BASE, homs={"kind": "random", "sizes": [6], "seeds": [0, 1]},
               group={"family": "free", "r": 2})
    new = apply_seed_override(raw, 40)
    assert new["homs"]["seeds"] == [40, 41] and new["dynamics"]["seed"] == 40
    assert raw["homs"]["seeds"] == [0, 1]
    path = write(tmp_path, raw)
    a = ExperimentConfig.load(path, seed_override=40)
    b = ExperimentConfig.load(path)
    assert a.hash != b.hash
