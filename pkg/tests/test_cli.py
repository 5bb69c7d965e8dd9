import json
import math
import subprocess
import sys

import pytest

from epdwave import experiments
from epdwave.cli import main
from epdwave.measures import PersistenceMeasure, write_diagram


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_line(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


@pytest.fixture
def tiny(tmp_path):
    write_diagram(PersistenceMeasure([0.0], [2.0]), tmp_path / "a.csv")
    write_diagram(PersistenceMeasure([0.1], [1.9]), tmp_path / "b.csv")
    return tmp_path


def test_ot_prints_oracle_value(capsys, tiny):
    code, out, _ = run(capsys, "ot", tiny / "a.csv", tiny / "b.csv", "--p", 2, "--plan", tiny / "plan.csv")
    assert code == 0
    assert float(out) == pytest.approx(math.sqrt(0.02), rel=1e-12)
    assert (tiny / "plan.csv").read_text().startswith("source_idx,target_idx,mass,cost")


def test_bound(capsys, tiny):
    code, out, _ = run(capsys, "bound", tiny / "a.csv", tiny / "b.csv", "--J", 3)
    assert code == 0 and float(out) >= 0.02 - 1e-9


def test_pipeline_sample_ph_estimate_grid(capsys, tmp_path):
    code, _, _ = run(capsys, "sample", "--n", 30, "--count", 4, "--seed", 3, "--out", tmp_path / "clouds")
    assert code == 0
    code, _, _ = run(capsys, "ph", tmp_path / "clouds", "--out", tmp_path / "dgms")
    assert code == 0
    assert len(list((tmp_path / "dgms").iterdir())) == 4
    code, out, _ = run(capsys, "estimate", "--in", tmp_path / "dgms", "--K", "auto", "--J", "auto",
                       "--out", tmp_path / "est.json")
    assert code == 0
    header = json.loads(out)
    assert header["N"] == 4 and header["K"] == 2 and header["J"] == 2
    saved = json.loads((tmp_path / "est.json").read_text())
    assert saved["K"] == 2 and saved["J"] == 2
    code, _, _ = run(capsys, "density-grid", tmp_path / "est.json", "--level", 3, "--out", tmp_path / "g.csv")
    assert code == 0
    rows = (tmp_path / "g.csv").read_text().splitlines()
    assert rows[0] == "u,v,value" and len(rows) == 65


def test_validation_errors_exit_1(capsys, tmp_path, tiny):
    code, _, err = run(capsys, "ot", tmp_path / "missing.csv", tiny / "b.csv")
    assert code == 1 and error_line(err)["error"] == "validation"
    code, _, err = run(capsys, "ot", tiny / "a.csv", tiny / "b.csv", "--p", "x")
    assert code == 1 and error_line(err)["error"] == "validation"
    code, _, err = run(capsys, "nonsense")
    assert code == 1
    (tmp_path / "bad.csv").write_text("0.5,0.1\n")
    code, _, err = run(capsys, "ot", tmp_path / "bad.csv", tiny / "b.csv")
    assert code == 1 and "row 1" in error_line(err)["message"]
    code, _, err = run(capsys, "converge", "--M", 5, "--Ns", "10")
    assert code == 1 and error_line(err)["error"] == "validation"


def test_runtime_error_exit_2(capsys, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise experiments.ExperimentError("N=5 replicate=0: solver failed")

    monkeypatch.setattr(experiments, "run_convergence", boom)
    code, _, err = run(capsys, "converge", "--n", 20, "--M", 5, "--Ns", "5,5,5", "--out-dir", tmp_path)
    assert code == 2
    line = error_line(err)
    assert line["error"] == "runtime" and "replicate=0" in line["message"]


def test_converge_and_fit(capsys, tmp_path):
    cfg = {"n": 30, "M": 20, "Ns": [4, 8, 12], "replicates": 1, "resolution": 5, "ps": [1.0]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    argv = ("converge", "--config", tmp_path / "cfg.json", "--p", "2", "--seed", 7)
    code, out, _ = run(capsys, *argv, "--out-dir", tmp_path / "o1")
    assert code == 0
    summary = json.loads(out)
    assert {f["p"] for f in summary["fits"]} == {2.0}
    records = (tmp_path / "o1" / "records.csv").read_text()
    assert records.splitlines()[0] == "p,tau,N,replicate,error,nnz_coeffs"
    assert len(records.splitlines()) == 4
    stored = json.loads((tmp_path / "o1" / "config.json").read_text())
    assert stored["sampler"]["seed"] == 7 and stored["M"] == 20
    code, _, _ = run(capsys, *argv, "--out-dir", tmp_path / "o2")
    assert (tmp_path / "o2" / "records.csv").read_text() == records
    code, out, _ = run(capsys, "fit", tmp_path / "o1" / "records.csv", "--out", tmp_path / "fit.json")
    assert code == 0
    fits = json.loads(out)
    assert [f["model"] for f in fits] == ["power", "power_log"]


def test_help_lists_subcommands(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0
    for name in ("sample", "ph", "estimate", "density-grid", "ot", "bound", "converge", "fit"):
        assert name in out


def test_entry_point_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "epdwave", "ot", str(tmp_path / "nope.csv"), str(tmp_path / "nope.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert json.loads(proc.stderr.strip())["type"] == "FileNotFoundError"
