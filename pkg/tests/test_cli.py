import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from seizurecs.cli import main
from seizurecs.compression import import_matrix
from seizurecs.data.windows import WindowedDataset, load_dataset, save_dataset
from seizurecs.metrics import pcc
from seizurecs.training import ModelBundle

TINY = ["--epochs", "2", "--filters-stem", "4", "--size-fc", "25", "--filters-recon", "2", "--batch-size", "8"]


def write_toy(path, n=40, length=256, channels=2, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    t = np.arange(length) / length
    x = rng.standard_normal((n, length, channels)) * 3.0 + 1.0
    x += labels[:, None, None] * 4.0 * np.sin(2 * np.pi * 20 * t)[None, :, None]
    ds = WindowedDataset(
        windows=x,
        labels=labels.astype(np.int8),
        recording_index=np.zeros(n, dtype=np.int64),
        start_sample=np.arange(n, dtype=np.int64) * length,
        recording_ids=("toy",),
        sample_rate=12.8,
    )
    save_dataset(ds, path)
    return ds


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    write_toy(root / "toy.c2spdata")
    code = main(["train", "--data", str(root / "toy.c2spdata"), "--ratio", "1/4", "--folds", "0,1", "--out", str(root / "run")] + TINY)
    assert code == 0
    return root


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSynth:
    def test_repeatable(self, tmp_path):
        args = ["synth", "--seed", "3", "--channels", "2", "--minutes", "2", "--seizures", "1:1.5"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert "annotations.csv" in files and any(f.endswith(".edf") for f in files)
        for f in (tmp_path / "a").iterdir():
            if f.name != "manifest.json":
                assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_zero_minutes(self, tmp_path, capsys):
        assert main(["synth", "--minutes", "0", "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_seizure_minutes_to_seconds(self, tmp_path):
        assert main(["synth", "--channels", "1", "--minutes", "120", "--seizures", "60:62", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "annotations.csv")
        assert rows[0] == ["recording_id", "onset_s", "offset_s"]
        assert len(rows) == 2 and rows[1][1:] == ["3600", "3720"]

    def test_bad_schedule(self, tmp_path):
        assert main(["synth", "--minutes", "5", "--seizures", "3-4", "--out", str(tmp_path)]) == 2

    def test_manifest(self, tmp_path):
        main(["synth", "--seed", "1", "--channels", "1", "--minutes", "1", "--out", str(tmp_path)])
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "synth" and manifest["seed"] == 1
        assert set(manifest) >= {"config", "input_hashes", "tool_version", "outputs", "wall_seconds", "argv"}


class TestTrain:
    def test_outputs(self, trained):
        run = trained / "run"
        for name in ("report.csv", "config.txt", "fold0.c2spmodel", "fold1_log.csv", "manifest.json"):
            assert (run / name).exists()
        rows = read_csv(run / "report.csv")
        assert [r[0] for r in rows[1:]] == ["0", "1", "mean", "std"]

    def test_ratio_shapes(self, trained):
        bundle = ModelBundle.load(trained / "run" / "fold0.c2spmodel")
        assert bundle.compression.weight.shape == (64, 256)
        assert bundle.n_compressed == 64

    def test_rerun_identical_report(self, trained):
        run = trained / "run"
        before = (run / "report.csv").read_bytes()
        assert main(["rerun", str(run / "manifest.json")]) == 0
        assert (run / "report.csv").read_bytes() == before

    def test_binary_prediction_only(self, tmp_path):
        write_toy(tmp_path / "toy.c2spdata")
        args = ["train", "--data", str(tmp_path / "toy.c2spdata"), "--lambda", "0", "--mode", "binary", "--folds", "0"]
        assert main(args + ["--out", str(tmp_path / "run")] + TINY) == 0
        bundle = ModelBundle.load(tmp_path / "run" / "fold0.c2spmodel")
        assert bundle.cfg.lam == 0.0 and bundle.cfg.mode == "binary"
        eff = bundle.compression.effective_matrix()
        assert np.all((eff == 0) | (eff == 1))
        rows = read_csv(tmp_path / "run" / "report.csv")
        assert rows[1][4] == ""  # no reconstruction metrics without a trained decoder

    def test_budget_sweep(self, tmp_path):
        write_toy(tmp_path / "toy.c2spdata", n=20)
        args = ["train", "--data", str(tmp_path / "toy.c2spdata"), "--budget", "2", "--folds", "0", "--epochs", "1"]
        assert main(args + ["--filters-recon", "2", "--out", str(tmp_path / "run")]) == 0
        rows = read_csv(tmp_path / "run" / "grid.csv")
        assert rows[0][-1] == "val_accuracy" and len(rows) == 3
        assert all(0.0 <= float(r[-1]) <= 1.0 for r in rows[1:])

    def test_non_paper_ratio_warns(self, tmp_path, capsys):
        write_toy(tmp_path / "toy.c2spdata", n=20)
        args = ["train", "--data", str(tmp_path / "toy.c2spdata"), "--ratio", "1/3", "--folds", "0"]
        assert main(args + ["--out", str(tmp_path / "run")] + TINY) == 0
        assert "warning" in capsys.readouterr().err

    def test_decimal_ratio_rejected(self, tmp_path):
        write_toy(tmp_path / "toy.c2spdata", n=20)
        args = ["train", "--data", str(tmp_path / "toy.c2spdata"), "--ratio", "0.25", "--out", str(tmp_path / "run")]
        assert main(args) == 2

    def test_missing_data(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "run")]) == 2

    def test_corrupt_data(self, tmp_path):
        (tmp_path / "bad.c2spdata").write_bytes(b"garbage")
        assert main(["train", "--data", str(tmp_path / "bad.c2spdata"), "--out", str(tmp_path / "run")]) == 3

    def test_threads_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("C2SP_THREADS", "x")
        write_toy(tmp_path / "toy.c2spdata", n=20)
        assert main(["train", "--data", str(tmp_path / "toy.c2spdata"), "--out", str(tmp_path / "run")]) == 2


class TestDeploy:
    def test_compress_reconstruct(self, trained, tmp_path):
        model = str(trained / "run" / "fold0.c2spmodel")
        data = str(trained / "toy.c2spdata")
        assert main(["compress", "--model", model, "--in", data, "--out", str(tmp_path / "z.c2spdata")]) == 0
        z = load_dataset(tmp_path / "z.c2spdata")
        assert z.windows.shape == (40, 64, 2)
        assert main(["reconstruct", "--model", model, "--in", str(tmp_path / "z.c2spdata"), "--out", str(tmp_path / "x.c2spdata")]) == 0
        x_hat = load_dataset(tmp_path / "x.c2spdata")
        x = load_dataset(data)
        assert x_hat.windows.shape == x.windows.shape
        np.testing.assert_array_equal(x_hat.labels, x.labels)
        # output is back on the input scale
        assert abs(x_hat.windows.mean() - x.windows.mean()) < 1.0
        assert pcc(x.windows[0], x_hat.windows[0]) is not None

    def test_predict_rows_sum_to_one(self, trained, tmp_path):
        model = str(trained / "run" / "fold0.c2spmodel")
        assert main(["predict", "--model", model, "--in", str(trained / "toy.c2spdata"), "--out", str(tmp_path / "p.csv")]) == 0
        rows = read_csv(tmp_path / "p.csv")
        assert rows[0] == ["window", "recording_id", "start_sample", "label", "p_interictal", "p_preictal"]
        assert len(rows) == 41
        for r in rows[1:]:
            assert abs(float(r[4]) + float(r[5]) - 1.0) < 1e-12
        assert (tmp_path / "manifest.json").exists()

    def test_shape_mismatch(self, trained, tmp_path):
        write_toy(tmp_path / "wide.c2spdata", n=6, channels=3)
        model = str(trained / "run" / "fold0.c2spmodel")
        assert main(["predict", "--model", model, "--in", str(tmp_path / "wide.c2spdata"), "--out", str(tmp_path / "p.csv")]) == 2

    def test_reconstruct_rejects_uncompressed(self, trained, tmp_path):
        model = str(trained / "run" / "fold0.c2spmodel")
        args = ["reconstruct", "--model", model, "--in", str(trained / "toy.c2spdata"), "--out", str(tmp_path / "x.c2spdata")]
        assert main(args) == 2

    def test_export_matrix(self, trained, tmp_path):
        model = trained / "run" / "fold0.c2spmodel"
        assert main(["export-matrix", "--model", str(model), "--out", str(tmp_path / "w.c2spmat")]) == 0
        back = import_matrix(tmp_path / "w.c2spmat")
        bundle = ModelBundle.load(model)
        np.testing.assert_array_equal(back.effective_matrix(), bundle.compression.effective_matrix())


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "seizurecs.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "0.1.0" in out.stdout
