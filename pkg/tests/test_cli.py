"""CLI surface: scenarios, measure checks, minimization, exit codes."""

import json

import numpy as np
import pytest

from holovar import AtomicMeasure, Domain
from holovar.cli import main

from conftest import line_measure


def test_run_scenario_writes_report(tmp_path, capsys):
    out = tmp_path / "rep.json"
    csv_out = tmp_path / "rep.csv"
    code = main(["run", "el-curve-residual", "--param", "source=line",
                 "--out", str(out), "--csv", str(csv_out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["pass"] is True
    assert rep["checks"][0]["provenance"] == "trivial"
    assert csv_out.exists()
    assert "PASS" in capsys.readouterr().out


def test_run_scenario_with_params(tmp_path):
    out = tmp_path / "rep.json"
    code = main(["run", "torus-wiggle-gap", "--param", "k=4", "--param", "eps=0.05",
                 "--param", "nx=12", "--param", "nt=4", "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["params"]["k"] == 4


def test_check_closedness_exit_codes(tmp_path):
    mu, _ = line_measure(n_nodes=60)
    mpath = tmp_path / "m.json"
    mu.save(str(mpath))
    assert main(["check", "closedness", "--measure", str(mpath), "--degree", "2"]) == 0
    # an open non-loop trapezoid curve on a torus fails a tight tolerance
    bad = mu.with_atoms(V=mu.V + 1.0)
    bad_path = tmp_path / "bad.json"
    bad.save(str(bad_path))
    assert main(["check", "closedness", "--measure", str(bad_path),
                 "--degree", "2", "--tol", "1e-12"]) == 1


def test_check_graph_and_theta(tmp_path):
    from holovar.scenarios import two_branch_measure
    _, mu = two_branch_measure(51)
    mpath = tmp_path / "branch.json"
    mu.save(str(mpath))
    assert main(["check", "graph", "--measure", str(mpath)]) == 1
    assert main(["check", "theta1", "--measure", str(mpath), "--lagrangian", "free",
                 "--lagrangian-params", '{"n": 2}', "--degree", "2"]) == 1


def test_check_invariance(tmp_path):
    mu, _ = line_measure(n_nodes=60)
    mpath = tmp_path / "m.json"
    mu.save(str(mpath))
    code = main(["check", "invariance", "--measure", str(mpath),
                 "--lagrangian", "free", "--lagrangian-params", '{"n": 2}',
                 "--degree", "2"])
    assert code == 0


def test_minimize_roundtrip(tmp_path):
    out = tmp_path / "min.json"
    report = tmp_path / "lp.json"
    code = main(["minimize", "--lagrangian", "free", "--lagrangian-params", '{"n": 1}',
                 "--grid", "16,17,5", "--degree", "2", "--out", str(out),
                 "--report", str(report)])
    assert code == 0
    mu = AtomicMeasure.load(str(out))
    assert np.max(np.abs(mu.V)) <= 1e-12
    assert json.loads(report.read_text())["value"] <= 1e-10
    # the saved minimizer passes its own closedness check
    assert main(["check", "closedness", "--measure", str(out), "--degree", "2"]) == 0


def test_unknown_scenario_rejected():
    with pytest.raises(SystemExit):
        main(["run", "does-not-exist"])


def test_lagrangian_error_is_reported(tmp_path, capsys):
    mu, _ = line_measure(n_nodes=20)
    mpath = tmp_path / "m.json"
    mu.save(str(mpath))
    code = main(["check", "invariance", "--measure", str(mpath),
                 "--lagrangian", "nope"])
    assert code == 2
    assert "error:" in capsys.readouterr().err
