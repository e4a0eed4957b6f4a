import json
import subprocess
import sys

import pytest

from cli_configs import CONFIGS
from degsde import cli


def _run(tmp_path, command, cfg, threads=1, name="out"):
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / name
    code = cli.main([command, "--config", str(cfg_path), "--out", str(out), "--threads", str(threads)])
    return code, out


def test_plan_output(tmp_path):
    code, out = _run(tmp_path, "plan", CONFIGS["plan"])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema_version"] == cli.SCHEMA_VERSION and rep["command"] == "plan" and rep["passed"]
    plan = rep["results"]["plan"] if "plan" in rep["results"] else rep["results"]
    assert plan["v"][0] == 1.0
    assert plan["constraint_residual"] <= 1e-8
    header = (out / "report.csv").read_text().splitlines()[0]
    assert header.startswith("t,v,v_prime")
    meta = json.loads((out / "meta.json").read_text())
    assert meta["threads"] == 1 and meta["backend"] in ("python", "cython")


def test_gramian_output(tmp_path):
    code, out = _run(tmp_path, "gramian", CONFIGS["gramian"])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["results"]["kalman"]["satisfied"]


@pytest.mark.parametrize("cfg,path", [
    ({"model": "4.1", "T": 1.5, "bogus": 1}, "config.bogus"),
    ({"model": {"example": "4.1", "epz": 1}, "T": 1.5}, "config.model.epz"),
    ({"model": "4.1", "T": 1.5, "dt": 0.03}, "config.r0"),
    ({"model": "4.1", "T": 0.4}, "config.T"),
    ({"model": "4.1", "T": 1.5, "n_paths": 1}, "config.n_paths"),
    ({"model": "4.1", "T": 1.5, "xi": [1.0]}, "config.xi"),
    ({"model": "4.1", "T": 1.5, "f": "nope"}, "config.f"),
    ({"T": 1.5}, "config.model"),
])
def test_config_errors(tmp_path, capsys, cfg, path):
    code, _ = _run(tmp_path, "simulate", cfg)
    assert code == 2
    assert path in capsys.readouterr().err


def test_unreadable_config(tmp_path, capsys):
    assert cli.main(["plan", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert cli.main(["plan", "--config", str(bad)]) == 2
    assert cli.main(["plan", "--config", str(bad), "--threads", "0"]) == 2


def test_failing_check_exits_one(tmp_path):
    cfg = {"model": "4.1", "assumptions": ["A1"], "lambda": 0.1, "grid": {"lo": -2, "hi": 2, "step": 1}}
    code, out = _run(tmp_path, "verify-assumptions", cfg)
    assert code == 1
    assert json.loads((out / "report.json").read_text())["passed"] is False


def test_simulate_is_reproducible_across_threads(tmp_path):
    _, a = _run(tmp_path, "simulate", CONFIGS["simulate"], 1, "a")
    _, b = _run(tmp_path, "simulate", CONFIGS["simulate"], 4, "b")
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()


def test_format_json_only(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(CONFIGS["simulate"]))
    assert cli.main(["simulate", "--config", str(cfg_path), "--out", str(tmp_path / "o"), "--format", "json"]) == 0
    assert not (tmp_path / "o" / "report.csv").exists()


def test_module_entry_point(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(CONFIGS["gramian"]))
    res = subprocess.run([sys.executable, "-m", "degsde", "gramian", "--config", str(cfg_path),
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "o" / "report.json").exists()
