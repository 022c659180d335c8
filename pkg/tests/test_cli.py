import csv
import json

import pytest

from adjoint_lab.cli import EXPERIMENTS, main


def run(tmp_path, *args, env=None, monkeypatch=None):
    return main(["run", *args, "--out", str(tmp_path / "out")])


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_conservation_run(tmp_path):
    code = run(tmp_path, "conservation", "--problem", "heat", "--method", "rk4", "--n", "9",
               "--steps", "100")
    assert code == 0
    rows = read_csv(tmp_path / "out" / "conservation.csv")
    assert rows[0] == ["step", "t", "invariant", "drift"]
    assert len(rows) == 102
    assert max(float(r[3]) for r in rows[1:]) <= 1e-12
    summary = json.loads((tmp_path / "out" / "conservation.json").read_text())
    assert summary["passed"] and summary["result"]["tolerance"] == 1e-12


def test_order_study_run(tmp_path):
    code = run(tmp_path, "order-study", "--problem", "burgers", "--method", "rk4", "--steps",
               "20,40,80,160")
    rows = read_csv(tmp_path / "out" / "order-study.csv")
    assert rows[0] == ["h", "error"] and len(rows) == 5
    slope = json.loads((tmp_path / "out" / "order-study.json").read_text())["result"]["slope"]
    assert slope == pytest.approx(4.0, abs=0.3)
    assert code == 0


@pytest.mark.parametrize("experiment", [e for e in EXPERIMENTS if e != "order-study"])
def test_every_experiment_passes_with_defaults(tmp_path, experiment):
    assert run(tmp_path, experiment) == 0
    assert (tmp_path / "out" / f"{experiment}.csv").exists()
    assert (tmp_path / "out" / f"{experiment}.json").exists()


def test_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["run", "gradient-check", "--problem", "burgers", "--out", str(out)]) == 0
    assert (a / "gradient-check.csv").read_bytes() == (b / "gradient-check.csv").read_bytes()
    assert (a / "gradient-check.json").read_bytes() == (b / "gradient-check.json").read_bytes()


def test_malformed_config_writes_nothing(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert run(tmp_path, "conservation", "--config", str(cfg)) == 2
    assert not (tmp_path / "out").exists()
    assert "invalid config" in capsys.readouterr().err


def test_unknown_enum_lists_options(tmp_path, capsys):
    assert run(tmp_path, "conservation", "--method", "leapfrog") == 2
    err = capsys.readouterr().err
    assert "rk4" in err and "implicit_midpoint" in err
    assert run(tmp_path, "sweep") == 2
    assert "order-study" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_invalid_problem_is_config_error(tmp_path):
    assert run(tmp_path, "conservation", "--problem", "advection", "--bc", "dirichlet") == 2
    assert run(tmp_path, "conservation", "--problem", "heat", "--nu", "0") == 2
    assert run(tmp_path, "order-study", "--steps", "10,20") == 2


def test_config_file_and_seed_env(tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "conservation", "problem": "burgers", "n": 7,
                               "method": "heun", "pairing": "mass", "n_steps": 30,
                               "seed": 3, "initial": {"profile": "gaussian", "width": 0.2}}))
    assert run(tmp_path, "conservation", "--config", str(cfg)) == 0
    summary = json.loads((tmp_path / "out" / "conservation.json").read_text())
    assert summary["config"]["seed"] == 3 and summary["config"]["n"] == 7
    monkeypatch.setenv("ADJOINT_LAB_SEED", "11")
    assert run(tmp_path, "conservation", "--config", str(cfg)) == 0
    summary = json.loads((tmp_path / "out" / "conservation.json").read_text())
    assert summary["config"]["seed"] == 11


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_failure_exit_code(tmp_path, capsys):
    # explicit Euler far outside its stability region overflows
    code = run(tmp_path, "order-study", "--problem", "heat", "--nu", "10", "--method",
               "explicit_euler", "--steps", "2,4,8", "--t-final", "5")
    assert code == 1
    assert "failed" in capsys.readouterr().err


def test_failed_check_exit_code(tmp_path):
    # step counts deep in the round-off floor flatten the measured slope
    code = run(tmp_path, "order-study", "--method", "rk4", "--steps", "2000,4000,8000",
               "--t-final", "0.2")
    assert code == 1
    assert (tmp_path / "out" / "order-study.csv").exists()
