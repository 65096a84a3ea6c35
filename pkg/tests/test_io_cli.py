import json
import subprocess
import sys as _sys

import numpy as np
import pytest

from phoct import io
from phoct.builtins import builtin_system
from phoct.cli import run
from phoct.core import validate_system
from phoct.generators import random_ph_system
from phoct.spectral import kernel_geometry
from phoct.sim import simulate


def test_system_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(21)
    sys = random_ph_system(rng, 5, 2)
    path = tmp_path / "sys.json"
    io.write_system(path, sys)
    back = io.read_system(path)
    for name in ("J", "R", "Q", "B", "u_lo", "u_hi"):
        np.testing.assert_array_equal(getattr(back, name), getattr(sys, name))
    assert validate_system(back).to_dict() == validate_system(sys).to_dict()


def test_problem_documents(tmp_path):
    sys, d = builtin_system("msd-r1")
    io.write_system(tmp_path / "sys.json", sys)
    doc = {"system": "sys.json", "x0": [1, 1, 1], "T": 5.0, "N": 50,
           "terminal": {"x_ref": [0, 0, 0], "W": np.eye(3).tolist()}}
    (tmp_path / "prob.json").write_text(json.dumps(doc))
    prob = io.read_problem(tmp_path / "prob.json")
    assert not prob.fixed_end and prob.N == 50
    again = io.problem_from_dict(io.problem_to_dict(prob))
    np.testing.assert_array_equal(again.W, prob.W)
    prob = io.problem_from_dict({"builtin": "msd-r2", "T": 10.0})
    np.testing.assert_array_equal(prob.x_target, d["x_target"])


@pytest.mark.parametrize("doc,field", [
    ({"builtin": "msd-r1"}, "T"),
    ({"builtin": "nope", "T": 1.0}, "builtin"),
    ({"builtin": "msd-r1", "T": 1.0, "x0": [1, 2]}, "x0"),
    ({"builtin": "msd-r1", "T": 1.0, "tolerances": {"tol_x": 1}}, "tolerances.tol_x"),
    ({"J": [[0]], "R": [[0]], "Q": [[1]], "u_lo": [-1], "u_hi": [1], "T": 1.0}, "B"),
])
def test_malformed_documents_name_the_field(doc, field):
    with pytest.raises(io.ConfigError) as exc:
        io.problem_from_dict(doc)
    assert exc.value.field == field


def test_trajectory_csv(tmp_path):
    sys, d = builtin_system("msd-r1")
    traj = simulate(sys, d["x0"], np.full((1, 10), 0.5), 0.1)
    path = tmp_path / "t.csv"
    io.write_trajectory_csv(path, sys, traj, kernel_geometry(sys))
    header, data = io.read_trajectory_csv(path)
    assert header == ["t", "x_1", "x_2", "x_3", "u_1", "y_1", "H", "dist_ker"]
    assert data.shape == (11, 8)
    np.testing.assert_array_equal(data[:, 1:4], traj.X.T)
    assert data[-1, 4] == 0.5


def test_json_cleaning():
    assert json.loads(io.dumps({"a": np.float64(np.inf), "b": np.arange(2), "c": np.bool_(True)})) == \
        {"a": None, "b": [0, 1], "c": True}


def test_exit_codes(capsys):
    assert run(["frobnicate"]) == 2
    assert run(["decompose", "--builtin", "msd-r9"]) == 2
    assert run(["decompose"]) == 2
    assert run(["simulate", "--builtin", "msd-r1", "--horizon", "1", "--control", "5"]) == 2
    assert run(["timeopt", "--builtin", "msd-r1"]) == 2
    assert run(["solve", "--builtin", "msd-r1", "--box", "1", "--horizon", "10"]) == 1
    capsys.readouterr()


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"grdi": 10}))
    assert run(["simulate", "--builtin", "msd-r1", "--config", str(cfg)]) == 2
    assert "config.grdi" in capsys.readouterr().err


def test_decompose_builtins(capsys):
    assert run(["decompose", "--builtin", "msd-r1"]) == 0
    assert json.loads(capsys.readouterr().out)["d1"] == 1
    assert run(["decompose", "--builtin", "msd-lossless"]) == 0
    assert json.loads(capsys.readouterr().out)["d1"] == 3
    assert run(["validate", "--builtin", "msd-r2"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"]


def test_config_values_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"horizon": 2.0, "grid": 20, "x0": [0, 0, 1]}))
    assert run(["simulate", "--builtin", "msd-r1", "--config", str(cfg), "--grid", "40"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["N"] == 40 and doc["T"] == 2.0


def test_simulate_is_deterministic(tmp_path, capsys):
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        args = ["simulate", "--builtin", "msd-r1", "--horizon", "3", "--control", "random",
                "--seed", "9", "--out", str(out)]
        assert run(args) == 0
        outs.append((out / "trajectory.csv").read_bytes())
    assert outs[0] == outs[1]
    capsys.readouterr()


def test_solve_and_steady(tmp_path, capsys):
    out = tmp_path / "solve"
    assert run(["solve", "--builtin", "msd-r1", "--horizon", "10", "--adjoint", "--out", str(out)]) == 0
    doc = json.loads((out / "summary.json").read_text())
    assert doc["status"] == "converged"
    header, data = io.read_trajectory_csv(out / "trajectory.csv")
    assert header[-1] == "s_1" and data.shape[0] == 1001
    capsys.readouterr()
    assert run(["steady", "--builtin", "msd-r1", "--anchor", "1,1,1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["kkt"]["passed"] and doc["steady_state"]["family_dim"] == 1


def test_sweep_outputs(tmp_path, capsys):
    out = tmp_path / "sweep"
    assert run(["sweep", "--builtin", "msd-r2", "--horizons", "10,15", "--out", str(out)]) == 0
    assert (out / "trajectory_T10.csv").exists() and (out / "trajectory_T15.csv").exists()
    rep = json.loads((out / "sweep.json").read_text())
    assert [e["T"] for e in rep["entries"]] == [10.0, 15.0]
    assert "mid_dist" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([_sys.executable, "-m", "phoct", "decompose", "--builtin", "msd-r1"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["d2"] == 2
