import csv
import json
import subprocess
import sys

import pytest

from mpcc_opt.cli import EXIT_OK, EXIT_USAGE, main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    for name in ("pusher", "pusher-modes", "cartpole-softwall", "double-integrator"):
        assert name in out


def test_list_json(capsys):
    assert main(["list", "--json"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    names = {e["name"] for e in data}
    assert "double-integrator" in names


@pytest.mark.parametrize("argv", [
    ["solve", "double-integrator", "--bogus", "1"],
    ["solve", "no-such-problem"],
    ["solve", "double-integrator", "--Ne", "twenty"],
    ["solve", "double-integrator", "--relaxation", "nonsense"],
    ["solve", "double-integrator", "--solver", "tol=abc"],
    ["solve", "double-integrator", "--solver", "nokey=1"],
    ["list", "--bogus"],
    ["estimate", "pusher"],
    ["solve", "--Ne", "8"],
])
def test_usage_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] != "list" else argv) == EXIT_USAGE


def test_solve_double_integrator(tmp_path):
    assert main(["solve", "double-integrator", "--out", str(tmp_path)]) == EXIT_OK
    sol = json.loads((tmp_path / "solution.json").read_text())
    assert sol["status"] == "Optimal"
    assert sol["objective"] == pytest.approx(12.0, rel=0.01)
    rows = read_csv(tmp_path / "trajectory.csv")
    assert rows[0][0] == "t"
    assert len(rows) == 1 + 21
    assert rows[-1][-1] == ""  # no input acts after the last node
    it = read_csv(tmp_path / "iterations.csv")
    assert it[0][0] == "iter" and len(it) == sol["iterations"] + 2


def test_solve_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["solve", "double-integrator", "--min-time", "true", "--out", str(d)]) == EXIT_OK
    for f in ("trajectory.csv", "solution.json", "iterations.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_config_with_flag_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"problem": "double-integrator", "params": {"Ne": 10, "T": 2.0},
                               "solver": {"tol": 1e-9}, "output": str(tmp_path / "o")}))
    assert main(["solve", "--config", str(cfg), "--Ne", "8"]) == EXIT_OK
    sol = json.loads((tmp_path / "o" / "solution.json").read_text())
    assert sol["params"]["Ne"] == 8 and sol["params"]["T"] == 2.0
    assert len(read_csv(tmp_path / "o" / "trajectory.csv")) == 1 + 9


@pytest.mark.parametrize("bad", [
    {"problem": "double-integrator", "params": {"Ne": "10"}},
    {"problem": "double-integrator", "params": {"min_time": 1}},
    {"problem": "double-integrator", "solver": {"max_iter": 2.5}},
    {"problem": "double-integrator", "unknown": 1},
    {"problem": "double-integrator", "params": []},
])
def test_config_type_errors(bad, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(bad))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE


def test_solver_failure_exit_code(tmp_path):
    # the double integrator is a QP and converges in one step, so use the pusher
    argv = ["solve", "pusher", "--Ne", "5", "--solver", "max_iter=2", "--out", str(tmp_path)]
    assert main(argv) == 1
    assert json.loads((tmp_path / "solution.json").read_text())["status"] == "MaxIter"


def test_simulate_and_gnuplot(tmp_path):
    assert main(["simulate", "cartpole-softwall", "--sigma", "0.01", "--seed", "4", "--out", str(tmp_path)]) == EXIT_OK
    rows = read_csv(tmp_path / "dataset.csv")
    assert len(rows) == 1 + 201
    assert main(["solve", "double-integrator", "--gnuplot", "--out", str(tmp_path / "g")]) == EXIT_OK
    assert (tmp_path / "g" / "plot.gp").exists()


def test_estimate_small(tmp_path):
    argv = ["estimate", "cartpole-softwall", "--sigmas", "0.0001,0.01", "--realizations", "2",
            "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK
    rows = read_csv(tmp_path / "estimates.csv")
    assert len(rows) == 1 + 4
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert "median_nondecreasing" in summary


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "mpcc_opt", "list"], capture_output=True, text=True)
    assert r.returncode == 0 and "pusher" in r.stdout
