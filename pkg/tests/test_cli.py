import json
import subprocess
import sys

import numpy as np
import pytest

from decloss import cli
from decloss.gradcheck import GradcheckResult
from decloss.imageio import load_image, save_image
from decloss.toy.checkpoint import load_checkpoint
from decloss.toy.data import synthetic_dataset


@pytest.fixture
def dirs(tmp_path):
    hr = tmp_path / "hr"
    hr.mkdir()
    for i, img in enumerate(synthetic_dataset(3, size=32, seed=0)):
        save_image(img, hr / f"img{i}.png")
    return tmp_path


def run(capsys, *argv):
    code = cli.run_command([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestCommands:
    def test_enhance(self, dirs, capsys):
        out = dirs / "out.png"
        code, _, _ = run(capsys, "enhance", "--alpha", "1.0", "--mu", "12", dirs / "hr" / "img0.png", out)
        assert code == 0 and out.exists()
        assert load_image(out).pixels.shape == (3, 32, 32)

    def test_prep(self, dirs, capsys):
        code, out, _ = run(capsys, "prep", "--scale", "4", dirs / "hr", dirs / "lr")
        assert code == 0 and json.loads(out)["written"] == 3
        assert load_image(dirs / "lr" / "img1.png").pixels.shape == (3, 8, 8)

    def test_loss(self, dirs, capsys):
        code, out, _ = run(capsys, "loss", "--sr", dirs / "hr", "--hr", dirs / "hr", "--patch", "8", "--eta", "15")
        assert code == 0
        report = json.loads(out)
        assert report["l1"] == 0.0
        assert [p["name"] for p in report["pairs"]] == ["img0", "img1", "img2"]
        assert report["config"]["contrast"]["patch_size"] == 8
        assert report["total"] == pytest.approx(3e-5 * report["ld"], rel=1e-12)

    def test_loss_unmatched(self, dirs, capsys):
        sr = dirs / "sr"
        sr.mkdir()
        save_image(np.zeros((3, 32, 32)), sr / "img0.png")
        save_image(np.zeros((3, 32, 32)), sr / "stray.png")
        code, _, err = run(capsys, "loss", "--sr", sr, "--hr", dirs / "hr")
        assert code == 2
        assert err.startswith("error:") and ("stray.png" in err or "img1.png" in err)

    def test_loss_config_file(self, dirs, capsys):
        cfg = dirs / "run.cfg"
        cfg.write_text("contrast.patch_size = 8\nweights.w1 = 0\n")
        code, out, _ = run(capsys, "loss", "--sr", dirs / "hr", "--hr", dirs / "hr", "--config", cfg)
        report = json.loads(out)
        assert code == 0 and report["l1"] is None and report["config"]["weights"]["w1"] == 0.0

    def test_icoo_deterministic(self, dirs, capsys):
        args = ("icoo", "--sr", dirs / "hr", "--hr", dirs / "hr", "--seed", "7", "--rounds", "2")
        _, first, _ = run(capsys, *args)
        _, second, _ = run(capsys, *args)
        assert first == second
        report = json.loads(first)
        assert report["seed"] == 7 and report["config"]["seed"] == 7
        assert first.count("\n") == 1

    def test_icoo_report_file(self, dirs, capsys):
        path = dirs / "report.json"
        code, out, _ = run(capsys, "icoo", "--sr", dirs / "hr", "--hr", dirs / "hr", "--rounds", "1", "--report", path)
        assert code == 0 and json.loads(path.read_text()) == json.loads(out)

    def test_icoo_thread_count_irrelevant(self, dirs, capsys, monkeypatch):
        args = ("icoo", "--sr", dirs / "hr", "--hr", dirs / "hr", "--rounds", "2")
        monkeypatch.setenv("DECL_THREADS", "1")
        _, serial, _ = run(capsys, *args)
        monkeypatch.setenv("DECL_THREADS", "4")
        _, parallel, _ = run(capsys, *args)
        assert serial == parallel

    def test_bad_thread_env(self, dirs, capsys, monkeypatch):
        monkeypatch.setenv("DECL_THREADS", "zero")
        code, _, err = run(capsys, "icoo", "--sr", dirs / "hr", "--hr", dirs / "hr")
        assert code == 1 and "DECL_THREADS" in err

    def test_train_toy(self, dirs, capsys):
        ckpt = dirs / "m.ckpt"
        cfg = dirs / "t.cfg"
        cfg.write_text("train.lr_crop = 4\ntrain.scale = 2\ntrain.batch_size = 2\ncontrast.patch_size = 4\n")
        code, out, _ = run(capsys, "train-toy", "--data", dirs / "hr", "--out", ckpt, "--steps", "2", "--config", cfg)
        assert code == 0
        params, header = load_checkpoint(ckpt)
        assert params.scale == 2 and header["config"]["batch_size"] == 2
        lines = (dirs / "m.csv").read_text().splitlines()
        assert lines[0] == "step,l1,ld,total" and len(lines) == 5
        assert json.loads(out)["steps"] == 4

    def test_psnr(self, dirs, capsys):
        img = dirs / "hr" / "img0.png"
        code, out, _ = run(capsys, "psnr", img, img)
        assert code == 0 and float(out) == 100.0

    def test_gradcheck_success(self, capsys, monkeypatch):
        monkeypatch.setattr(cli, "run_suite", lambda seeds: [GradcheckResult("exp", 0, 1e-9)])
        code, out, _ = run(capsys, "gradcheck")
        assert code == 0 and out.startswith("PASS exp")

    def test_gradcheck_failure(self, capsys, monkeypatch):
        results = [GradcheckResult("exp", 0, 1e-9), GradcheckResult("log", 0, 0.5)]
        monkeypatch.setattr(cli, "run_suite", lambda seeds: results)
        code, out, err = run(capsys, "gradcheck")
        assert code == 2 and "FAIL log" in out and err.startswith("error:")


class TestErrors:
    def test_no_subcommand(self, capsys):
        code, _, err = run(capsys)
        assert code == 1 and err.startswith("error:")

    def test_unknown_flag(self, capsys):
        code, _, err = run(capsys, "psnr", "--fast", "a", "b")
        assert code == 1 and err.startswith("error:")

    def test_missing_image(self, tmp_path, capsys):
        code, _, err = run(capsys, "psnr", tmp_path / "a.png", tmp_path / "b.png")
        assert code == 2 and "a.png" in err

    def test_bad_config_value(self, dirs, capsys):
        code, _, err = run(capsys, "enhance", "--alpha", "-1", dirs / "hr" / "img0.png", dirs / "o.png")
        assert code == 1 and "alpha" in err

    def test_bad_scale(self, dirs, capsys):
        code, _, _ = run(capsys, "prep", "--scale", "0", dirs / "hr", dirs / "lr")
        assert code == 1

    def test_shape_mismatch_is_data_error(self, dirs, capsys):
        other = dirs / "small.png"
        save_image(np.zeros((3, 8, 8)), other)
        code, _, err = run(capsys, "psnr", dirs / "hr" / "img0.png", other)
        assert code == 2 and err.startswith("error:")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "decloss", "psnr"], capture_output=True, text=True)
    assert proc.returncode == 1 and proc.stderr.startswith("error:")
