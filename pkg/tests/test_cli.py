"""Command line interface: verbs, files, exit codes."""

import json
import os

import pytest

from fedregret import harness
from fedregret.bounds import AuditVerdict
from fedregret.cli import main


def base_config(**overrides):
    doc = {
        "num_clients": 2, "horizon": 16, "sync_period": 2, "dimension": 2,
        "step_size_policy": {"kind": "constant", "eta": 0.05},
        "loss_spec": {"family": "mean_quadratic"},
        "adversary_spec": {"kind": "static_iid", "mean": [1.0, 0.0], "variance": 1.0},
        "replicates": 4, "seed": 31,
    }
    doc.update(overrides)
    return doc


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def test_run_writes_artifacts(tmp_path):
    cfg = write_config(tmp_path, base_config())
    out = tmp_path / "out"
    rc = main(["run", "--config", cfg, "--out", str(out), "--plots", "off"])
    assert rc == 0
    assert sorted(os.listdir(out)) == ["result.json", "trace.csv"]
    doc = json.loads((out / "result.json").read_text(encoding="utf-8"))
    assert doc["config"]["seed"] == 31


def test_run_overrides_replicates_and_seed(tmp_path):
    cfg = write_config(tmp_path, base_config())
    out = tmp_path / "out"
    rc = main(["run", "--config", cfg, "--out", str(out), "--plots", "off",
               "--replicates", "2", "--seed", "99"])
    assert rc == 0
    doc = json.loads((out / "result.json").read_text(encoding="utf-8"))
    assert doc["config"]["replicates"] == 2
    assert doc["config"]["seed"] == 99


def test_invalid_config_exits_2(tmp_path):
    cfg = write_config(tmp_path, base_config(num_clients=0))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    unknown = write_config(tmp_path, dict(base_config(), extra_field=1), "u.json")
    assert main(["run", "--config", unknown, "--out", str(tmp_path / "o")]) == 2


def test_divergence_exits_3(tmp_path):
    doc = base_config(
        horizon=300, replicates=1,
        step_size_policy={"kind": "constant", "eta": 5.0, "unsafe": True})
    cfg = write_config(tmp_path, doc)
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_sweep_verb(tmp_path):
    doc = {"base": base_config(replicates=2), "axes": {"horizon": [8, 16, 32]}}
    cfg = write_config(tmp_path, doc, "sweep.json")
    out = tmp_path / "sw"
    rc = main(["sweep", "--config", cfg, "--out", str(out), "--plots", "off"])
    assert rc == 0
    assert "sweep.csv" in os.listdir(out)
    bad = write_config(tmp_path, base_config(), "flat.json")
    assert main(["sweep", "--config", bad, "--out", str(out)]) == 2


def test_speedup_and_tau_verbs(tmp_path):
    cfg = write_config(tmp_path, base_config(replicates=2))
    rc = main(["speedup", "--config", cfg, "--out", str(tmp_path / "sp"),
               "--clients", "1,2", "--plots", "off"])
    assert rc == 0
    assert "speedup.csv" in os.listdir(tmp_path / "sp")
    assert main(["speedup", "--config", cfg, "--out", str(tmp_path / "sp"),
                 "--clients", "1,two"]) == 2
    rc = main(["tau-study", "--config", cfg, "--out", str(tmp_path / "tau"),
               "--taus", "1,2", "--plots", "off"])
    assert rc == 0
    assert "tau.csv" in os.listdir(tmp_path / "tau")


def test_audit_verb_pass(tmp_path, capsys):
    doc = base_config(replicates=32, horizon=8,
                      adversary_spec={"kind": "static_heterogeneous",
                                      "means": [[1.0, 0.0], [-1.0, 0.0]],
                                      "variances": 1.0})
    cfg = write_config(tmp_path, doc)
    rc = main(["audit", "--config", cfg, "--out", str(tmp_path / "a"),
               "--states", "2", "--budget", "20000"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert any(line.startswith("[PASS] mean_gradient_norm@t") for line in lines)
    assert lines[-1] == "split identity ok: True"


def test_audit_verb_failure_exits_4(tmp_path, monkeypatch):
    def fake_audit(config, state_count=5, budget=100_000, threads=1):
        verdict = AuditVerdict("mean_gradient_norm", False, 2.0, 1.0, -1.0)
        return {"result": None, "verdicts": {"mean_gradient_norm@t1": verdict},
                "split_identity_ok": True, "all_passed": False}

    monkeypatch.setattr(harness, "audit_run", fake_audit)
    cfg = write_config(tmp_path, base_config())
    rc = main(["audit", "--config", cfg, "--out", str(tmp_path / "a")])
    assert rc == 4


def test_audit_insufficient_budget_exits_2(tmp_path):
    cfg = write_config(tmp_path, base_config(replicates=1))
    rc = main(["audit", "--config", cfg, "--out", str(tmp_path / "a"),
               "--states", "1", "--budget", "1"])
    assert rc == 2
