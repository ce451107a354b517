from __future__ import annotations

import csv
import os
import re

import numpy as np
import pytest

from blockstate import checkpoint, cli
from blockstate.cli import parse_args, read_config, run
from blockstate.dataset import tile, write_idx
from blockstate.errors import ConfigurationError
from blockstate.models import init_model
from blockstate.training import TrainingDiverged



@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(7)
    pixels = rng.integers(0, 256, (40, 8, 8), dtype=np.uint8)
    labels = (np.arange(40) % 10).astype(np.uint8)
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(img, lab, pixels, labels)
    return str(img), str(lab)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def assert_csv_format(path, header):
    rows = read_rows(path)
    assert rows[0] == header
    for row in rows[1:]:
        for field in row:
            # integers verbatim, floats exactly as %.17g renders them
            assert field == "%.17g" % float(field) or field == str(int(field)), field
    return rows


class TestTrain:
    def test_epochs_zero_checkpoint_is_init(self, idx_pair, tmp_path):
        img, lab = idx_pair
        out = tmp_path / "run"
        code = run(["train", "--model", "nnbps", "--block-size", "2", "--epochs", "0",
                    "--images", img, "--labels", lab, "--out", str(out), "--seed", "4"])
        assert code == 0
        model, header = checkpoint.load(out / "model.ckpt")
        ref = init_model("nnbps", tile((8, 8), 2), chi=2, seed=4)
        for key in ref.params:
            np.testing.assert_array_equal(model.params[key], ref.params[key])
        assert header["train_config"]["epochs"] == 0
        rows = assert_csv_format(out / "history.csv", ["epoch", "train_loss", "train_acc", "test_acc"])
        assert len(rows) == 2 and rows[1][0] == "0" and rows[1][3] == "nan"
        summary = (out / "summary.txt").read_text()
        assert "Model | Block Size | Bond Dim. | Training Accuracy | Test Accuracy" in summary
        assert re.search(r"NNBPS \| 2x2 \| chi=2 \| \d+\.\d{3}% \| n/a", summary)
        assert (out / "config-resolved.txt").exists()

    def test_train_with_test_set(self, idx_pair, tmp_path):
        img, lab = idx_pair
        out = tmp_path / "run"
        code = run(["train", "--model", "sbps", "--chi", "3", "--epochs", "2", "--batch", "10", "--lr", "0.01",
                    "--images", img, "--labels", lab, "--test-images", img, "--test-labels", lab,
                    "--test-limit", "20", "--out", str(out), "--deterministic"])
        assert code == 0
        rows = assert_csv_format(out / "history.csv", ["epoch", "train_loss", "train_acc", "test_acc"])
        assert [r[0] for r in rows[1:]] == ["0", "1", "2"]
        assert re.search(r"SBPS \| 2x2 \| chi=3 \| \d+\.\d{3}% \| \d+\.\d{3}%", (out / "summary.txt").read_text())

    def test_deterministic_byte_identical(self, idx_pair, tmp_path):
        img, lab = idx_pair
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run(["train", "--epochs", "2", "--batch", "8", "--lr", "0.01", "--images", img,
                        "--labels", lab, "--out", str(out), "--deterministic"]) == 0
            outs.append(out)
        assert (outs[0] / "history.csv").read_bytes() == (outs[1] / "history.csv").read_bytes()
        assert (outs[0] / "model.ckpt").read_bytes() == (outs[1] / "model.ckpt").read_bytes()

    def test_sumstate_then_eval(self, idx_pair, tmp_path):
        img, lab = idx_pair
        assert run(["train", "--model", "sumstate", "--images", img, "--labels", lab, "--out", str(tmp_path / "s")]) == 0
        out = tmp_path / "e"
        code = run(["eval", "--checkpoint", str(tmp_path / "s" / "model.ckpt"), "--images", img,
                    "--labels", lab, "--out", str(out)])
        assert code == 0
        rows = assert_csv_format(out / "eval.csv", ["label", "count", "accuracy"])
        assert len(rows) == 11 and sum(int(r[1]) for r in rows[1:]) == 40
        assert "accuracy:" in (out / "summary.txt").read_text()


class TestErrors:
    def test_missing_images(self, tmp_path, capsys):
        code = run(["train", "--images", str(tmp_path / "none"), "--labels", str(tmp_path / "none2"),
                    "--out", str(tmp_path)])
        assert code == 2
        assert "not found" in capsys.readouterr().err

    def test_usage(self, capsys):
        assert run(["frobnicate"]) == 1
        assert run(["train", "--chi", "many"]) == 1
        assert run([]) == 1
        assert capsys.readouterr().err

    def test_missing_required_paths(self, tmp_path):
        assert run(["train", "--out", str(tmp_path)]) == 1
        assert run(["eval", "--out", str(tmp_path)]) == 1

    def test_bad_training_config(self, idx_pair, tmp_path):
        img, lab = idx_pair
        assert run(["train", "--lr", "-1", "--images", img, "--labels", lab, "--out", str(tmp_path)]) == 1

    def test_unwritable_out(self, idx_pair, tmp_path):
        img, lab = idx_pair
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code = run(["spectrum", "--digit", "1", "--sizes", "2", "--images", img, "--labels", lab,
                    "--out", str(blocker / "sub")])
        assert code == 2

    def test_bad_checkpoint(self, idx_pair, tmp_path):
        img, lab = idx_pair
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"garbage!")
        assert run(["eval", "--checkpoint", str(bad), "--images", img, "--labels", lab, "--out", str(tmp_path)]) == 2

    def test_bad_window_partition(self, idx_pair, tmp_path):
        img, lab = idx_pair
        assert run(["spectrum", "--digit", "1", "--sizes", "2", "--partition", "window:0", "--images", img,
                    "--labels", lab, "--out", str(tmp_path)]) == 1
        assert run(["spectrum", "--digit", "1", "--sizes", "2", "--partition", "quarter", "--images", img,
                    "--labels", lab, "--out", str(tmp_path)]) == 1

    def test_divergence_exit_code(self, idx_pair, tmp_path, monkeypatch):
        img, lab = idx_pair

        def diverge(model, *args, **kwargs):
            raise TrainingDiverged("loss is not finite (nan)", model, [])

        monkeypatch.setattr(cli, "train", diverge)
        out = tmp_path / "o"
        assert run(["train", "--images", img, "--labels", lab, "--out", str(out)]) == 3
        assert (out / "model.ckpt").exists() and "epochs completed: 0" in (out / "summary.txt").read_text()


class TestConfig:
    def test_file_values_and_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# training\nepochs = 7\nlr = 0.5\nblock-size = 3\ndeterministic = true\n")
        args = parse_args(["train", "--config", str(cfg), "--lr", "0.25"])
        assert (args.epochs, args.lr, args.block_size, args.deterministic) == (7, 0.25, 3, True)

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs = 1\ncolour = blue\n")
        with pytest.raises(ConfigurationError, match="colour"):
            parse_args(["train", "--config", str(cfg)])
        assert run(["train", "--config", str(cfg)]) == 1

    def test_malformed_line(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs 1\n")
        with pytest.raises(ConfigurationError):
            read_config(str(cfg))

    def test_resolved_echo(self, idx_pair, tmp_path):
        img, lab = idx_pair
        cfg = tmp_path / "run.cfg"
        cfg.write_text("sizes = 2,4\n")
        out = tmp_path / "o"
        assert run(["spectrum", "--config", str(cfg), "--digit", "2", "--images", img, "--labels", lab,
                    "--out", str(out)]) == 0
        text = (out / "config-resolved.txt").read_text()
        assert "sizes = 2,4" in text and "digit = 2" in text


class TestAnalysis:
    def test_spectrum_small(self, idx_pair, tmp_path):
        img, lab = idx_pair
        out = tmp_path / "o"
        assert run(["spectrum", "--digit", "5", "--sizes", "1,4", "--images", img, "--labels", lab,
                    "--out", str(out), "--tol", "1e-10"]) == 0
        rows = assert_csv_format(out / "spectrum.csv", ["n_sigma", "alpha", "lambda_sq", "tol"])
        by_n = {}
        for n, a, lam, tol in rows[1:]:
            by_n.setdefault(int(n), []).append(float(lam))
            assert float(tol) == 1e-10
        assert by_n[1] == [1.0]
        assert sum(by_n[4]) == pytest.approx(1.0, abs=1e-12)

    def test_spectrum_window_partition(self, idx_pair, tmp_path):
        img, lab = idx_pair
        out = tmp_path / "o"
        assert run(["spectrum", "--digit", "5", "--sizes", "4", "--partition", "window:2", "--window-size", "4",
                    "--images", img, "--labels", lab, "--out", str(out)]) == 0
        assert len(read_rows(out / "spectrum.csv")) >= 2

    def test_entropy_scan_small(self, idx_pair, tmp_path):
        img, lab = idx_pair
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert run(["entropy-scan", "--digit", "3", "--n-sigma", "4", "--L", "1,2", "--window-size", "4",
                        "--images", img, "--labels", lab, "--out", str(out), "--deterministic"]) == 0
            outs.append(out)
        rows = assert_csv_format(outs[0] / "entropy.csv", ["L", "mean_S", "std_S", "n_partitions"])
        assert [(r[0], r[3]) for r in rows[1:]] == [("1", "16"), ("2", "9")]
        assert (outs[0] / "entropy.csv").read_bytes() == (outs[1] / "entropy.csv").read_bytes()

    def test_thread_cap(self, idx_pair, tmp_path, monkeypatch):
        img, lab = idx_pair
        monkeypatch.setenv("BLOCKSTATE_THREADS", "2")
        out = tmp_path / "o"
        assert run(["spectrum", "--digit", "5", "--sizes", "4", "--images", img, "--labels", lab, "--out", str(out)]) == 0
        monkeypatch.setenv("BLOCKSTATE_THREADS", "lots")
        assert run(["spectrum", "--digit", "5", "--sizes", "4", "--images", img, "--labels", lab, "--out", str(out)]) == 1

    @pytest.mark.mnist
    def test_spectrum_mnist_threes(self, tmp_path):
        mnist = os.environ.get("BLOCKSTATE_MNIST_DIR", "/root/data/mnist")
        out = tmp_path / "o"
        code = run(["spectrum", "--digit", "3", "--sizes", "10", "--partition", "half",
                    "--images", os.path.join(mnist, "train-images-idx3-ubyte"),
                    "--labels", os.path.join(mnist, "train-labels-idx1-ubyte"), "--out", str(out)])
        assert code == 0
        rows = read_rows(out / "spectrum.csv")[1:]
        assert len(rows) == 10
        np.testing.assert_allclose([float(r[2]) for r in rows], 0.1, rtol=0.10)
