import json
import subprocess
import sys

import numpy as np
import pytest

from quadimmerse import data_path, trace_from_csv
from quadimmerse.cli import main


def test_immerse_example3(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["immerse", "--system", "example3.json", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["m"] == 3 and rep["dims"] == [2, 1, 1] and rep["dim_z"] == 13
    assert len(rep["calA_const"]) == 13 and np.array(rep["calA_coupling"]).shape == (3, 4, 9)
    assert "m=3" in capsys.readouterr().err


def test_immerse_example2_to_stdout(capsys):
    assert main(["immerse", "--system", data_path("example2.json")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["m"] == 2
    np.testing.assert_allclose(rep["alpha"], [4.0, 4.0], atol=1e-10)


def test_simulate_writes_trace(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["simulate", "--scenario", "example2_scenario.json", "--out", str(out)]) == 0
    tr = trace_from_csv(out)
    assert tr.t.size == 10001 and tr.x.shape == (10001, 2) and tr.zhat.shape[1] == 0
    # x = (sin t, cos t) exactly; the plant's unstable mode amplifies the RK4 error later on
    np.testing.assert_allclose(tr.x[2000], [np.sin(2.0), np.cos(2.0)], atol=1e-9)


def test_observe_example3_below_frozen(tmp_path, frozen):
    out, rep = tmp_path / "t.csv", tmp_path / "r.json"
    code = main(["observe", "--scenario", data_path("example3_scenario.json"),
                 "--out", str(out), "--report", str(rep)])
    assert code == 0
    tr = trace_from_csv(out)
    for g, val in frozen["example3_scenario.json"].items():
        assert tr.errors[g][-1] <= val * (1 + frozen["rtol"])
    assert json.loads(rep.read_text())["dims"] == [2, 1, 1]


def test_selftest(capsys):
    assert main(["selftest", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("seed 3") and "all checks passed" in out


@pytest.mark.parametrize(
    "argv",
    [["immerse", "--system", "example2.json", "--bogus"], ["frobnicate"], ["immerse"], []],
)
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 1
    assert "usage:" in capsys.readouterr().err


def test_validation_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 2, "p": 0, "q": 1, "A": [[1]], "B": [], "C": [[[1, 0], [0, 1]]], "d": [[0, 0]]}')
    assert main(["immerse", "--system", str(bad)]) == 1
    assert "invalid input" in capsys.readouterr().err
    assert main(["immerse", "--system", str(tmp_path / "missing.json")]) == 1
    bad.write_text("{oops")
    assert main(["simulate", "--scenario", str(bad)]) == 1


def test_numerical_failure(tmp_path, capsys):
    sc = {
        "system": {"n": 1, "p": 0, "q": 1, "A": [[1e4]], "B": [[]], "C": [[[1.0]]], "d": [[0.0]]},
        "input": {"kind": "zero", "dim": 0},
        "x0": [1.0], "T": 100.0, "h": 1.0,
    }
    path = tmp_path / "sc.json"
    path.write_text(json.dumps(sc))
    assert main(["simulate", "--scenario", str(path)]) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "quadimmerse", "immerse", "--system", "example2.json"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["m"] == 2
    proc = subprocess.run([sys.executable, "-m", "quadimmerse", "simulate", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 1 and "usage:" in proc.stderr
