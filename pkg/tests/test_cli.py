import json
import shutil
import subprocess

import numpy as np
import pytest

from grbfnn.cli import main
from grbfnn.data import load_csv
from grbfnn.model import load_model

FAST = ["--lr", "0.01", "--epochs", "150"]


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_synth_writes_csv_and_manifest(workdir):
    assert run("synth", "p3", "--n", 30, "--seed", 2, "--out", "p3.csv") == 0
    ds = load_csv("p3.csv")
    assert ds.X.shape == (30, 10)
    man = json.loads((workdir / "p3.csv.manifest.json").read_text())
    assert man["argv"][:2] == ["synth", "p3"]


def test_synth_sine_ridge_params(workdir):
    assert run("synth", "sine_ridge", "--n", 20, "--a", 0.1, "--b", 0.9, "--out", "s.csv") == 0
    ds = load_csv("s.csv")
    np.testing.assert_allclose(ds.y, np.sin(0.1 * ds.X[:, 0] + 0.9 * ds.X[:, 1]))


def test_train_analyze_predict(workdir, capsys):
    run("synth", "p3", "--n", 60, "--out", "d.csv")
    assert run("train", "d.csv", "--centers", 6, *FAST, "--lambda-u", 0.1, "--model-out", "m.json") == 0
    model = load_model("m.json")
    assert model.trained and "train_rmse" in model.metrics
    trace = (workdir / "m.json.trace.csv").read_text().splitlines()
    assert trace[0].startswith("epoch,loss_R")
    assert run("analyze", "m.json", "d.csv", "--out-dir", "an", "--resolution", 10) == 0
    for name in ("eigenvalues.csv", "importance.csv", "projection.csv", "surface.csv"):
        assert (workdir / "an" / name).exists()
    surf = np.loadtxt(workdir / "an" / "surface.csv", delimiter=",", skiprows=1)
    assert surf.shape == (100, 3)
    assert surf[:, 2].min() == pytest.approx(0.0) and surf[:, 2].max() == pytest.approx(1.0)
    out = capsys.readouterr().out
    assert "gamma_1 / sum(gamma)" in out
    assert run("predict", "m.json", "d.csv", "--out", "p.csv") == 0
    pred = np.loadtxt(workdir / "p.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(pred, model.predict(load_csv("d.csv").X))
    assert "rmse" in capsys.readouterr().out


def test_classification_predict_columns(workdir):
    run("synth", "p2", "--n", 80, "--out", "d.csv")
    assert run("train", "d.csv", "--centers", 8, *FAST, "--model-out", "m.json") == 0
    assert load_model("m.json").task == "multiclass"
    assert run("predict", "m.json", "d.csv", "--out", "p.csv") == 0
    header = (workdir / "p.csv").read_text().splitlines()[0]
    assert header == "prediction,p0,p1,p2,p3"


def test_train_is_deterministic(workdir):
    run("synth", "moons", "--n", 40, "--out", "d.csv")
    for name in ("a.json", "b.json"):
        assert run("train", "d.csv", "--centers", 4, *FAST, "--seed", 3, "--model-out", name) == 0
    a = json.loads((workdir / "a.json").read_text())
    b = json.loads((workdir / "b.json").read_text())
    for key in ("u", "w", "C"):
        assert a[key] == b[key]


def test_cv_outputs(workdir, capsys):
    run("synth", "sine_ridge", "--n", 30, "--out", "d.csv")
    rc = run("cv", "d.csv", "--lambda-u", "0.01,1", "--lambda-w", "0,0.1", "--centers", 4,
             "--folds", 3, "--lr", 0.01, "--epochs", 50, "--out", "cv.csv")
    assert rc == 0
    rows = (workdir / "cv.csv").read_text().splitlines()
    assert len(rows) == 1 + 4 * 3
    assert (workdir / "cv.heatmap.csv").read_text().count("*") == 1
    report = json.loads((workdir / "cv.report.json").read_text())
    assert report["metric"] == "rmse" and len(report["summary"]) == 4
    assert "best:" in capsys.readouterr().out


def test_gradcheck(capsys):
    assert run("gradcheck", "--mode", "learn", "--seed", 4) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "c:" in out
    assert run("gradcheck", "--tol", 1e-30) == 1


def test_rerun_reproduces(workdir):
    run("synth", "p1", "--n", 40, "--out", "d.csv")
    run("train", "d.csv", "--centers", 4, *FAST, "--model-out", "m.json")
    first = (workdir / "m.json").read_text()
    shutil.copy(workdir / "m.json.manifest.json", workdir / "saved.json")
    (workdir / "m.json").unlink()
    assert run("rerun", "saved.json") == 0
    assert (workdir / "m.json").read_text() == first


@pytest.mark.parametrize("argv", [
    ["synth", "p9"],
    ["train", "d.csv", "--epochs", "0", "--model-out", "m.json"],
    ["train", "d.csv", "--lambda-u", "-1", "--model-out", "m.json"],
    ["cv", "d.csv", "--lambda-u", "a,b", "--out", "x.csv"],
    [],
])
def test_usage_errors(workdir, argv):
    assert main(argv) == 2


def test_runtime_errors(workdir, capsys):
    assert run("train", "missing.csv", "--model-out", "m.json") == 1
    (workdir / "bad.csv").write_text("a,y\n1,zz\n")
    assert run("train", "bad.csv", "--model-out", "m.json") == 1
    assert "line 2" in capsys.readouterr().err
    run("synth", "p3", "--n", 20, "--out", "d.csv")
    assert run("train", "d.csv", "--centers", 50, "--model-out", "m.json") == 1


def test_dimension_mismatch(workdir):
    run("synth", "p3", "--n", 30, "--out", "d.csv")
    run("synth", "moons", "--n", 30, "--out", "m2.csv")
    run("train", "d.csv", "--centers", 4, *FAST, "--model-out", "m.json")
    assert run("predict", "m.json", "m2.csv", "--out", "p.csv") == 1


@pytest.mark.skipif(shutil.which("grbfnn") is None, reason="console script not installed")
def test_console_script(workdir):
    res = subprocess.run(["grbfnn", "gradcheck"], capture_output=True, text=True)
    assert res.returncode == 0 and "PASS" in res.stdout
