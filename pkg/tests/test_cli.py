import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ltvsteer.cli import main

EX2_A = [[0.2, 0.8], [0.0, 0.3]]
EX2_B = [[1.0], [0.0]]


def _write(tmp_path, doc, name="scenario.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _report(out):
    with open(os.path.join(out, "report.json")) as fh:
        return json.load(fh)


def test_example_ex1(tmp_path):
    out = str(tmp_path / "ex1")
    assert main(["example", "ex1", "--out", out]) == 0
    rep = _report(out)
    assert rep["rank_H"] == 2 and abs(rep["det_barPhi_f"] - 3.24) < 1e-8
    assert rep["residual_frobenius"] <= 1e-4
    assert rep["x3_open_loop_deviation"] < 1e-6
    for f in ("schedule.csv", "schedule.json", "trajectory.csv"):
        assert os.path.exists(os.path.join(out, f))
    with open(os.path.join(out, "schedule.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["segment", "t", "Pi_1_1"] and "K_2_3" in rows[0]
    assert {r[0] for r in rows[1:]} == {"0", "1", "2", "3", "4"}


def test_example_ex2(tmp_path):
    out = str(tmp_path / "ex2")
    assert main(["example", "ex2", "--out", out]) == 0
    rep = _report(out)
    assert rep["residual_frobenius"] < 4.5e-6
    assert rep["perturbed_sigma22_rejected"] is True
    assert rep["mean0"] == [1.0, -0.5]
    with open(os.path.join(out, "ellipses.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:3] == ["t", "center_1", "center_2"]
    assert len(rows) == 8
    ts = [float(r[0]) for r in rows[1:]]
    assert np.allclose(ts, [k / 6 for k in range(7)])


def test_check_sigma_infeasible_exit_2(tmp_path, capsys):
    doc = {"task": "check-sigma", "horizon": 1.0,
           "system": {"kind": "constant", "A": EX2_A, "B": EX2_B},
           "target": {"sigma0": np.eye(2).tolist(),
                      "sigma_f": [[0.2, 0.0], [0.0, float(np.exp(0.6)) + 0.1]]}}
    out = str(tmp_path / "o")
    assert main(["run", _write(tmp_path, doc), "--out", out]) == 2
    rep = _report(out)
    assert rep["decision"] == "infeasible"
    assert rep["certificate"]["member"] is False
    assert rep["certificate"]["projected_residual"] > 1e-3


def test_check_sigma_member(tmp_path):
    doc = {"task": "check-sigma", "horizon": 1.0,
           "system": {"kind": "constant", "A": EX2_A, "B": EX2_B},
           "target": {"sigma0": np.eye(2).tolist(),
                      "sigma_f": [[0.2, 0.0], [0.0, float(np.exp(0.6))]]}}
    out = str(tmp_path / "o")
    assert main(["run", _write(tmp_path, doc), "--out", out]) == 0


@pytest.mark.parametrize("doc, field", [
    ({"task": "nope"}, "task"),
    ({"task": "gramian", "horizon": 1.0, "system": {"kind": "constant", "A": [[0.0]]}},
     "system.B"),
    ({"task": "gramian", "horizon": 1.0,
      "system": {"kind": "constant", "A": [[0.0, 1.0]], "B": [[1.0]]}}, "system"),
    ({"task": "check-phi", "horizon": 1.0,
      "system": {"kind": "constant", "A": [[0.0]], "B": [[1.0]]}}, "target.phi_f"),
    ({"task": "gramian", "horizon": 1.0, "tolerances": {"quad": -1},
      "system": {"kind": "constant", "A": [[0.0]], "B": [[1.0]]}}, "tolerances.quad"),
])
def test_malformed_scenario_exit_1(tmp_path, capsys, doc, field):
    assert main(["run", _write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 1
    assert field in capsys.readouterr().err


def test_invalid_json_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "invalid JSON" in capsys.readouterr().err


def _steer_doc():
    return {"task": "steer-phi", "horizon": 1.0, "seed": 3,
            "system": {"kind": "sampled", "times": [0.0, 0.5, 1.0],
                       "A_samples": [[[0.0, 1.0], [-1.0, 0.0]], [[0.1, 1.0], [-1.0, 0.2]],
                                     [[0.0, 0.5], [-1.0, 0.0]]],
                       "B_samples": [[[1.0], [0.0]], [[0.5], [1.0]], [[0.0], [1.0]]]},
            "target": {"phi_f": [[0.0, -1.0], [1.0, 0.0]]},
            "tracers": [[1.0, 0.0], [0.0, 1.0]]}


def test_determinism_and_simulate_round_trip(tmp_path):
    path = _write(tmp_path, _steer_doc())
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["run", path, "--out", a]) == 0
    assert main(["run", path, "--out", b]) == 0
    ra, rb = _report(a), _report(b)
    ra.pop("timings"), rb.pop("timings")
    assert ra == rb
    for f in ("schedule.csv", "trajectory.csv", "schedule.json"):
        assert open(os.path.join(a, f)).read() == open(os.path.join(b, f)).read()
    assert ra["relative_residual"] < 1e-5

    sim = _steer_doc()
    sim["task"] = "simulate"
    sim["schedule"] = os.path.join(a, "schedule.json")
    out = str(tmp_path / "sim")
    assert main(["run", _write(tmp_path, sim, "sim.json"), "--out", out]) == 0
    rs = _report(out)
    assert abs(rs["residual_frobenius"] - ra["residual_frobenius"]) <= 1e-12 * max(
        ra["residual_frobenius"], 1e-300) + 1e-15


def test_gramian_task_polynomial(tmp_path):
    doc = {"task": "gramian", "horizon": 1.0,
           "system": {"kind": "polynomial", "A": [[0.0, 1.0], [0.0, 0.0]],
                      "B": [[0.0], [[1.0, 1.0]]]}}
    out = str(tmp_path / "g")
    assert main(["run", _write(tmp_path, doc), "--out", out]) == 0
    rep = _report(out)
    assert rep["rank"] == 2 and rep["relation_residual"] < 1e-7


def test_steer_sigma_controllable_method(tmp_path):
    doc = {"task": "steer-sigma", "horizon": 1.0, "method": "controllable",
           "system": {"kind": "constant", "A": [[0.0]], "B": [[1.0]]},
           "target": {"sigma0": [[1.0]], "sigma_f": [[4.0]]}}
    out = str(tmp_path / "s")
    assert main(["run", _write(tmp_path, doc), "--out", out]) == 0
    rep = _report(out)
    assert rep["residual_frobenius"] < 1e-8


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "ltvsteer.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "example" in res.stdout
