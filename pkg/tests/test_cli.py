import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from stochpoisson.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
GOLDEN = Path(__file__).parent / "golden" / "so3_stats.json"


def write_config(path, data):
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def so3_config(**overrides):
    data = yaml.safe_load((CONFIGS / "so3.yaml").read_text())
    data.update(overrides)
    return data


def close(a, b, rtol=1e-12):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(close(a[k], b[k], rtol) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(close(x, y, rtol) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, float):
        return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)
    return a == b


def test_so3_simulate_matches_golden(tmp_path, capsys):
    assert main(["simulate", str(CONFIGS / "so3.yaml"), "--out-dir", str(tmp_path)]) == 0
    stats = json.loads((tmp_path / "so3_stats.json").read_text())
    assert stats["monitor_drift"]["casimir"] < 1e-4
    assert stats["n_completed"] == 100
    assert (tmp_path / "so3_paths.csv").read_text().startswith("t,z1,z2,z3\n")
    assert close(stats, json.loads(GOLDEN.read_text()))
    assert "monitor casimir" in capsys.readouterr().out


def test_check_mode_passes_on_so3(tmp_path, capsys):
    assert main(["check", str(CONFIGS / "so3.yaml"), "--out-dir", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "so3_check.json").read_text())
    assert report["checks"] and all(c["passed"] for c in report["checks"].values())
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS jacobi" in out


def test_check_mode_reports_inconsistent_jacobi(tmp_path, capsys):
    cfg = write_config(tmp_path / "gl.yaml", {"mode": "check", "model": "gl_refinement"})
    assert main(["check", cfg, "--out-dir", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "check.json").read_text())
    assert not report["checks"]["jacobi"]["passed"]
    assert report["checks"]["jacobi"]["expected_to_pass"] is False
    assert "FAIL jacobi" in capsys.readouterr().out


def test_gl_audit_nonempty(tmp_path, capsys):
    assert main(["audit", str(CONFIGS / "gl_refinement_audit.yaml"), "--out-dir",
                 str(tmp_path)]) == 0
    report = json.loads((tmp_path / "gl_refinement_audit.json").read_text())
    flagged = [r for r in report["records"] if r["status"] != "ok"]
    assert report["flagged"] == len(flagged) > 0
    assert all(r["line"] for r in flagged)
    assert "gl_refinement" in capsys.readouterr().out


@pytest.mark.parametrize("overrides,field", [
    ({"model": {"name": "rigid"}}, "model.name"),
    ({"integrator": {"dt": -1.0}}, "integrator.dt"),
    ({"integrator": {"scheme": "rk4"}}, "integrator.scheme"),
    ({"initial": [1.0, 2.0]}, "initial"),
    ({"n_paths": 0}, "n_paths"),
    ({"monitors": ["energy"]}, "monitors[0]"),
    ({"noise": [{"1,0": 1.0}]}, "noise[0]"),
    ({"speed": 3}, "speed"),
    ({"model": {"name": "so3_lie_poisson", "params": {"inertia": [1, 2]}}}, "inertia"),
])
def test_config_errors_name_the_field(tmp_path, capsys, overrides, field):
    cfg = write_config(tmp_path / "bad.yaml", so3_config(**overrides))
    assert main(["simulate", cfg, "--out-dir", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert field in err


def test_missing_config_file(tmp_path, capsys):
    assert main(["check", str(tmp_path / "nope.yaml")]) == 1
    assert "config" in capsys.readouterr().err


def test_blow_up_exit_code(tmp_path, capsys):
    # a stiff quartic drift overflows under EM with large steps
    data = {
        "model": {"name": "so3_lie_poisson"},
        "hamiltonian": {"4,0,0": 10.0, "0,4,0": 10.0, "0,0,4": 10.0},
        "noise": [{"1,0,0": 5.0}],
        "initial": [3.0, 4.0, 5.0],
        "integrator": {"scheme": "euler_maruyama", "dt": 0.5, "steps": 40, "seed": 1},
        "n_paths": 8,
    }
    cfg = write_config(tmp_path / "blow.yaml", data)
    assert main(["simulate", cfg, "--out-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "blew up" in err and "step" in err
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert stats["n_failed"] > 0
    data["max_failure_fraction"] = 1.0
    cfg = write_config(tmp_path / "blow.yaml", data)
    assert main(["simulate", cfg, "--out-dir", str(tmp_path)]) == 0


def test_seed_and_out_dir_override(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    cfg = write_config(tmp_path / "s.yaml", so3_config(n_paths=5, integrator={
        "scheme": "stratonovich_heun", "dt": 1e-2, "steps": 50, "seed": 42}))
    assert main(["simulate", cfg, "--out-dir", str(a)]) == 0
    assert main(["simulate", cfg, "--out-dir", str(b), "--seed", "42"]) == 0
    assert main(["simulate", cfg, "--out-dir", str(c), "--seed", "43"]) == 0
    assert (a / "so3_paths.csv").read_bytes() == (b / "so3_paths.csv").read_bytes()
    assert (a / "so3_paths.csv").read_bytes() != (c / "so3_paths.csv").read_bytes()
    assert json.loads((c / "so3_stats.json").read_text())["integrator"]["seed"] == 43
    assert main(["simulate", cfg, "--out-dir", str(c), "--seed", "-1"]) == 1


def test_relative_outputs_follow_config_dir(tmp_path):
    shutil.copy(CONFIGS / "gl_refinement_audit.yaml", tmp_path / "audit.yaml")
    assert main(["audit", str(tmp_path / "audit.yaml")]) == 0
    assert (tmp_path / "out" / "gl_refinement_audit.json").exists()


def test_keep_several_paths(tmp_path):
    cfg = write_config(tmp_path / "k.yaml", so3_config(n_paths=3, keep_paths=2, integrator={
        "scheme": "stratonovich_heun", "dt": 1e-2, "steps": 10, "seed": 0}))
    assert main(["simulate", cfg, "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "so3_paths_0.csv").exists() and (tmp_path / "so3_paths_1.csv").exists()


def test_reruns_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(["simulate", str(CONFIGS / "adjoint_bundle.yaml"), "--out-dir", str(d)]) == 0
        outs.append([(d / name).read_bytes() for name in ("adjoint_paths.csv", "adjoint_stats.json")])
    assert outs[0] == outs[1]


def test_list_models_and_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "stochpoisson", "list-models"],
                          capture_output=True, text=True, check=True)
    rows = [line for line in proc.stdout.splitlines()
            if line.split() and line.split()[0].endswith(("_poisson", "_dual", "_sum", "_bundle",
                                                          "_refinement")) and ":" not in line]
    assert len(rows) == 6
    assert "so3_lie_poisson" in proc.stdout


def test_paths_csv_round_trips(tmp_path):
    cfg = write_config(tmp_path / "r.yaml", so3_config(n_paths=1, integrator={
        "scheme": "euler_maruyama", "dt": 1e-2, "steps": 5, "seed": 3}))
    assert main(["simulate", cfg, "--out-dir", str(tmp_path)]) == 0
    data = np.loadtxt(tmp_path / "so3_paths.csv", delimiter=",", skiprows=1)
    assert data.shape == (6, 4)
    stats = json.loads((tmp_path / "so3_stats.json").read_text())
    assert stats["mean"][-1] == data[-1, 1:].tolist()
