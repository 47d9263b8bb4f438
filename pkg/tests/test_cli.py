import json
import os

import numpy as np
import pytest

from flowlab.cli import main


def write_cfg(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_audit_config_passes(tmp_path):
    cfg = write_cfg(tmp_path, "audit.json", {
        "kind": "audit",
        "problem": "example1(0.4)",
        "simulation": {"dt": 0.01, "horizon": 1.0, "n_paths": 10, "seed": 1},
        "params": {"kappa": 1.0},
        "output_dir": str(tmp_path / "out"),
    })
    assert main(["run", cfg]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    audits = report["results"]["audits"]
    assert len(audits) == 4
    assert all(a["passed"] for a in audits)
    assert (tmp_path / "out" / "audits.csv").exists()
    assert (tmp_path / "out" / "audit_margins.svg").exists()
    assert (tmp_path / "out" / "provenance.json").exists()


def test_lyapunov_config_bm(tmp_path):
    cfg = write_cfg(tmp_path, "lyap.json", {
        "kind": "lyapunov",
        "problem": "bm(1)",
        "simulation": {"dt": 0.005, "horizon": 1.0, "n_paths": 2000, "seed": 2},
        "params": {"x": 0.0, "branch": "exp", "times": [0.5, 1.0]},
        "output_dir": str(tmp_path / "out"),
    })
    assert main(["run", cfg]) == 0


def test_unknown_preset_exits_3(tmp_path):
    cfg = write_cfg(tmp_path, "bad.json", {
        "kind": "audit",
        "problem": "no-such-preset",
        "simulation": {},
        "params": {},
        "output_dir": str(tmp_path / "out"),
    })
    assert main(["run", cfg]) == 3


def test_malformed_json_exits_3(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"kind": "audit", }')
    assert main(["run", str(path)]) == 3


def test_missing_field_exits_3(tmp_path):
    cfg = write_cfg(tmp_path, "nofield.json", {"problem": "bm(1)"})
    assert main(["run", cfg]) == 3


def test_simulate_kind_with_exports(tmp_path):
    cfg = write_cfg(tmp_path, "sim.json", {
        "kind": "simulate",
        "problem": "ou(1)",
        "simulation": {"dt": 0.01, "horizon": 0.5, "n_paths": 50, "seed": 3},
        "params": {"initial": 1.0, "export_csv": True, "export_flw1": True,
                   "first_exit_radius": 0.8},
        "output_dir": str(tmp_path / "out"),
    })
    assert main(["run", cfg]) == 0
    assert (tmp_path / "out" / "paths.csv").exists()
    assert (tmp_path / "out" / "paths.flw1").exists()
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["results"]["n_paths"] == 50


def test_report_byte_identical_across_runs_and_threads(tmp_path):
    payload = {
        "kind": "markov",
        "problem": "bm(1)",
        "simulation": {"dt": 0.01, "horizon": 1.0, "n_paths": 500, "seed": 5},
        "params": {"mode": "semigroup", "t": 1.0,
                   "f": {"expr": "sign(x1)", "sup": 1.0},
                   "x_grid": [-1.0, -0.5, 0.0, 0.5, 1.0]},
    }
    cfg = write_cfg(tmp_path, "markov.json", payload)
    outs = []
    for i, threads in enumerate((1, 8, 1)):
        out = str(tmp_path / f"out{i}")
        assert main(["run", cfg, "--out-dir", out, "--threads", str(threads)]) == 0
        outs.append(read_bytes(os.path.join(out, "report.json")))
    assert outs[0] == outs[1] == outs[2]


def test_threads_env_var(tmp_path, monkeypatch):
    payload = {
        "kind": "markov",
        "problem": "bm(1)",
        "simulation": {"dt": 0.02, "horizon": 0.5, "n_paths": 200, "seed": 7},
        "params": {"mode": "semigroup", "t": 0.5,
                   "f": {"expr": "sign(x1)", "sup": 1.0},
                   "x_grid": [-1.0, 0.0, 1.0]},
    }
    cfg = write_cfg(tmp_path, "markov.json", payload)
    out1 = str(tmp_path / "env1")
    monkeypatch.setenv("FLOWLAB_THREADS", "4")
    assert main(["run", cfg, "--out-dir", out1]) == 0
    monkeypatch.delenv("FLOWLAB_THREADS")
    out2 = str(tmp_path / "env2")
    assert main(["run", cfg, "--out-dir", out2]) == 0
    assert read_bytes(os.path.join(out1, "report.json")) == read_bytes(
        os.path.join(out2, "report.json"))


def test_seed_and_override_flags_change_report(tmp_path):
    payload = {
        "kind": "simulate",
        "problem": "bm(1)",
        "simulation": {"dt": 0.01, "horizon": 0.5, "n_paths": 100, "seed": 1},
        "params": {"initial": 0.0},
    }
    cfg = write_cfg(tmp_path, "sim.json", payload)
    a, b, c = (str(tmp_path / d) for d in ("a", "b", "c"))
    assert main(["run", cfg, "--out-dir", a]) == 0
    assert main(["run", cfg, "--out-dir", b, "--seed", "99"]) == 0
    assert main(["run", cfg, "--out-dir", c, "--paths-override", "120"]) == 0
    ra = json.loads((tmp_path / "a" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "report.json").read_text())
    rc = json.loads((tmp_path / "c" / "report.json").read_text())
    assert ra["results"]["terminal_mean"] != rb["results"]["terminal_mean"]
    assert rc["results"]["n_paths"] == 120
    assert rc["simulation"]["n_paths"] == 120


def test_plot_subcommand_renders_figures(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "audit.json", {
        "kind": "audit",
        "problem": "bm(1)",
        "simulation": {"dt": 0.01, "horizon": 1.0, "n_paths": 10, "seed": 1},
        "params": {},
        "output_dir": str(tmp_path / "out"),
    })
    assert main(["run", cfg]) == 0
    svg = tmp_path / "out" / "audit_margins.svg"
    svg.unlink()
    assert main(["plot", str(tmp_path / "out" / "report.json")]) == 0
    assert svg.exists()


def test_list_presets_table(capsys):
    assert main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert "example1" in out
    assert "ou(d)" in out
    assert "bm(d)" in out
    assert "step-drift-1d" in out


def test_zvonkin_kind_prints_trace(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "zv.json", {
        "kind": "zvonkin",
        "problem": "step-drift-1d",
        "simulation": {"dt": 0.01, "horizon": 0.5, "n_paths": 50, "seed": 11},
        "params": {"R0": 4.0,
                   "grid": {"x_min": -18.0, "x_max": 18.0, "n_x": 361, "n_t": 26}},
        "output_dir": str(tmp_path / "out"),
    })
    assert main(["run", cfg]) == 0
    out = capsys.readouterr().out
    assert "lambda escalation trace" in out
    assert (tmp_path / "out" / "lambda_trace.csv").exists()
    assert (tmp_path / "out" / "transform.zvk1").exists()


def test_flow_kind_witness(tmp_path):
    cfg = write_cfg(tmp_path, "flow.json", {
        "kind": "flow",
        "problem": "bm(1)",
        "simulation": {"dt": 0.01, "horizon": 0.5, "n_paths": 200, "seed": 13},
        "params": {"base_grid": [-1.0, 0.0, 1.0], "p": 2.0, "r": "inf"},
        "output_dir": str(tmp_path / "out"),
    })
    assert main(["run", cfg]) == 0
    assert (tmp_path / "out" / "witness.csv").exists()
    assert (tmp_path / "out" / "witness.svg").exists()


def test_occupation_kind_expression(tmp_path):
    cfg = write_cfg(tmp_path, "occ.json", {
        "kind": "occupation",
        "problem": "bm(1)",
        "simulation": {"dt": 0.01, "horizon": 1.0, "n_paths": 500, "seed": 17},
        "params": {"mode": "integral", "f": "indicator(1)", "x": 0.0},
        "output_dir": str(tmp_path / "out"),
    })
    assert main(["run", cfg]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert 0.5 < report["results"]["occupation"]["value"] < 1.0
