import json
import math

import numpy as np
import pytest

from isocal.cli import main
from isocal.core import Dataset, load_csv, read_matrix_csv, save_csv, synth_simplex, write_matrix_csv


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.strip()
    return code, (json.loads(out.splitlines()[-1]) if out else None)


@pytest.fixture
def binary_csv(tmp_path):
    path = tmp_path / "bin.csv"
    save_csv(synth_simplex(200, 2, 0.3, 1), path)
    return path


@pytest.fixture
def ternary_csv(tmp_path):
    path = tmp_path / "tri.csv"
    save_csv(synth_simplex(200, 3, 0.0, 2), path)
    return path


def test_binary_method_on_three_classes_is_a_mismatch(capsys, tmp_path, ternary_csv):
    code, _ = run(capsys, "fit", "--method", "pav", "--input", ternary_csv, "--output", tmp_path / "m.json")
    assert code == 3


def test_malformed_csv(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("p1,p2,y\n0.5,0.7,1\n")
    assert run(capsys, "fit", "--method", "pav", "--input", bad, "--output", tmp_path / "m.json")[0] == 2
    assert run(capsys, "fit", "--method", "pav", "--input", tmp_path / "missing.csv",
               "--output", tmp_path / "m.json")[0] == 2


def test_unsmoothed_tree_fit_is_perfectly_calibrated(capsys, tmp_path, ternary_csv):
    code, summary = run(capsys, "fit", "--method", "mc-irp", "--alpha", 0, "--input", ternary_csv,
                        "--output", tmp_path / "m.json")
    assert code == 0 and summary["ece"] <= 1e-9 and summary["K"] == 3


def test_fit_apply_round_trip(capsys, tmp_path, binary_csv):
    model = tmp_path / "m.json"
    assert run(capsys, "fit", "--method", "fixed-bins", "--bins", 5, "--input", binary_csv, "--output", model)[0] == 0
    out = tmp_path / "r.csv"
    assert run(capsys, "apply", "--model", model, "--input", binary_csv, "--output", out)[0] == 0
    R = read_matrix_csv(out, "r")
    assert R.shape == (200, 2) and len(np.unique(R, axis=0)) <= 5


def test_apply_with_wrong_class_count(capsys, tmp_path, binary_csv, ternary_csv):
    model = tmp_path / "m.json"
    run(capsys, "fit", "--method", "pav", "--input", binary_csv, "--output", model)
    assert run(capsys, "apply", "--model", model, "--input", ternary_csv, "--output", tmp_path / "r.csv")[0] == 3


def test_eval_closed_forms(capsys, tmp_path):
    y = np.array([0, 1, 2, 1, 0, 2])
    labels = tmp_path / "y.csv"
    save_csv(Dataset(np.eye(3)[y], y), labels)
    onehot = tmp_path / "onehot.csv"
    write_matrix_csv(onehot, np.eye(3)[y], "r")
    code, rep = run(capsys, "eval", "--forecasts", onehot, "--labels-from", labels, "--vus-samples", 10_000)
    assert code == 0 and rep["ece"] == 0 and rep["cross_entropy"] == 0 and rep["auc_or_vus"] == 1.0
    uniform = tmp_path / "uniform.csv"
    write_matrix_csv(uniform, np.full((6, 3), 1 / 3), "r")
    code, rep = run(capsys, "eval", "--forecasts", uniform, "--labels-from", labels)
    assert rep["cross_entropy"] == pytest.approx(math.log(3))


def test_eval_row_misalignment(capsys, tmp_path, binary_csv):
    short = tmp_path / "short.csv"
    write_matrix_csv(short, np.full((5, 2), 0.5), "r")
    assert run(capsys, "eval", "--forecasts", short, "--labels-from", binary_csv)[0] == 2


def test_roc_without_thresholds(capsys, tmp_path):
    data = tmp_path / "const.csv"
    save_csv(Dataset(np.full((4, 3), 1 / 3), [0, 1, 2, 0]), data)
    model = tmp_path / "m.json"
    run(capsys, "fit", "--method", "mc-irp", "--input", data, "--output", model)
    code, _ = run(capsys, "roc", "--model", model, "--input", data, "--no-grid",
                  "--raw-output", tmp_path / "a.csv", "--calibrated-output", tmp_path / "b.csv")
    assert code == 2


def test_roc_exports_points(capsys, tmp_path, ternary_csv):
    model = tmp_path / "m.json"
    run(capsys, "fit", "--method", "mc-irp", "--input", ternary_csv, "--output", model)
    code, info = run(capsys, "roc", "--model", model, "--input", ternary_csv, "--lattice-step", 0.25,
                     "--raw-output", tmp_path / "a.csv", "--calibrated-output", tmp_path / "b.csv")
    assert code == 0 and info["raw_points"] >= 1
    assert (tmp_path / "a.csv").read_text().count("\n") == info["raw_points"] + 1


def test_sweep_writes_rows(capsys, tmp_path, binary_csv):
    out = tmp_path / "s.csv"
    code, info = run(capsys, "sweep", "--calib", binary_csv, "--test", binary_csv, "--bins-grid", "1,4",
                     "--output", out)
    assert code == 0 and out.read_text().count("\n") == info["rows"] + 1


def test_synth_is_seeded(capsys, tmp_path, monkeypatch):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    run(capsys, "synth", "--n", 50, "--K", 3, "--noise", 0.2, "--seed", 7, "--output", a)
    monkeypatch.setenv("ISOCAL_SEED", "7")
    run(capsys, "synth", "--n", 50, "--K", 3, "--noise", 0.2, "--output", b)
    monkeypatch.setenv("ISOCAL_SEED", "8")
    run(capsys, "synth", "--n", 50, "--K", 3, "--noise", 0.2, "--output", c)
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()
    assert load_csv(a).K == 3
    assert run(capsys, "synth", "--n", 0, "--K", 3, "--output", a)[0] == 2


def test_roc_on_smoothed_noisy_model(capsys, tmp_path):
    data = tmp_path / "noisy.csv"
    save_csv(synth_simplex(500, 3, 0.3, 3), data)
    model = tmp_path / "m.json"
    run(capsys, "fit", "--method", "mc-irp", "--alpha", 1, "--input", data, "--output", model)
    code, _ = run(capsys, "roc", "--model", model, "--input", data,
                  "--raw-output", tmp_path / "a.csv", "--calibrated-output", tmp_path / "b.csv")
    assert code == 0
