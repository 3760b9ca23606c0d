import json

import numpy as np
import pytest

from silhouette3d.camera import CameraModel
from silhouette3d.cli import main
from silhouette3d.formats import read_silhouette, read_voxels, write_json, write_voxels


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def small_camera(tmp_path):
    p = tmp_path / "cam.json"
    write_json(CameraModel.scaled(32).to_dict(), p)
    return p


def gen(tmp_path, name, primitive, params, res=16):
    spec = tmp_path / f"{name}.json"
    spec.write_text(json.dumps({"primitive": primitive, "parameters": params, "resolution": res}))
    out = tmp_path / f"{name}.vox32"
    assert run("gen", spec, "-o", out) == 0
    return out


def view(tmp_path, az, el):
    p = tmp_path / f"view_{az}_{el}.json"
    p.write_text(json.dumps({"azimuth_deg": az, "elevation_deg": el}))
    return p


class TestExitCodes:
    def test_render_empty_grid(self, tmp_path):
        grid = tmp_path / "empty.vox32"
        write_voxels(np.zeros((32, 32, 32)), grid)
        out = tmp_path / "s.pgm"
        assert run("render", grid, "--view", view(tmp_path, 0, 0), "-o", out) == 0
        img = read_silhouette(out)
        assert img.shape == (64, 64) and np.all(img == 0)

    def test_unknown_command(self, capsys):
        assert run("carve") == 1
        assert "usage" in capsys.readouterr().err

    def test_no_command(self):
        assert run() == 1

    def test_missing_required_option(self, tmp_path):
        assert run("render", tmp_path / "x.vox32") == 1

    def test_missing_file(self, tmp_path):
        assert run("render", tmp_path / "nope.vox32", "--view", view(tmp_path, 0, 0), "-o", tmp_path / "s.pgm") == 2

    def test_corrupt_file(self, tmp_path):
        bad = tmp_path / "bad.vox32"
        bad.write_bytes(b"garbage")
        assert run("mesh", bad, "-o", tmp_path / "m.obj") == 2

    def test_bad_threshold(self, tmp_path):
        g = gen(tmp_path, "s", "sphere", {"radius": 0.3})
        assert run("eval-iou", "--pair", g, g, "--threshold", "high") == 1


class TestCommands:
    def test_mean_and_mesh(self, tmp_path):
        a = gen(tmp_path, "a", "sphere", {"radius": 0.3})
        b = gen(tmp_path, "b", "box", {"size": [0.4, 0.4, 0.4]})
        mean = tmp_path / "mean.vox32"
        assert run("mean", a, b, "-o", mean) == 0
        assert set(np.unique(read_voxels(mean).values)) <= {0.0, 0.5, 1.0}
        obj = tmp_path / "m.obj"
        assert run("mesh", mean, "-o", obj) == 0
        assert obj.read_text().startswith("v ")

    def test_eval_pose(self, tmp_path, capsys):
        pairs = tmp_path / "pairs.json"
        pairs.write_text(json.dumps([
            {"predicted": {"azimuth_deg": a, "elevation_deg": 0}, "truth": {"azimuth_deg": 0, "elevation_deg": 0}}
            for a in (10, 20, 40)]))
        assert run("eval-pose", pairs) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["median_error_deg"] == pytest.approx(20)
        assert out["acc_pi_6"] == pytest.approx(2 / 3)

    def test_eval_hausdorff(self, tmp_path, capsys):
        a, b = tmp_path / "a.xyz", tmp_path / "b.xyz"
        a.write_text("0 0 0\n")
        b.write_text("1 0 0\n2 0 0\n")
        assert run("eval-hausdorff", a, b) == 0
        assert json.loads(capsys.readouterr().out)["hausdorff"] == pytest.approx(1.25)
        assert run("eval-hausdorff", a, b, "--mode", "classic") == 0
        assert json.loads(capsys.readouterr().out)["hausdorff"] == pytest.approx(1.5)

    def test_fit_pose(self, tmp_path, small_camera):
        body = gen(tmp_path, "body", "mug", {}, res=24)
        sil = tmp_path / "s.pgm"
        assert run("render", body, "--view", view(tmp_path, 45, 20), "--camera", small_camera, "-o", sil) == 0
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"pose_refine_top_k": 6}))
        out = tmp_path / "pose.json"
        assert run("fit-pose", "--shape", body, "--silhouette", sil, "--camera", small_camera,
                   "--config", cfg, "-o", out) == 0
        assert set(json.loads(out.read_text())) == {"azimuth_deg", "elevation_deg"}


def pipeline(tmp_path, seed, max_iterations=500):
    cam = tmp_path / "cam.json"
    write_json(CameraModel.scaled(32).to_dict(), cam)
    truth = gen(tmp_path, "sphere", "sphere", {"radius": 0.35})
    mean = gen(tmp_path, "cube", "box", {"size": [1, 1, 1]})
    obs = []
    for az in range(0, 360, 15):
        sil = tmp_path / f"s{az}.pgm"
        v = view(tmp_path, az, 20)
        assert run("render", truth, "--view", v, "--camera", cam, "-o", sil) == 0
        obs += ["--obs", sil, v]
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"max_iterations": max_iterations}))
    fitted = tmp_path / "fit.vox32"
    report = tmp_path / "report.json"
    assert run("--seed", seed, "fit-shape", "--mean", mean, *obs, "--camera", cam, "--config", cfg, "-o", fitted,
               "--report", report) == 0
    return fitted, truth, json.loads(report.read_text())


def test_end_to_end_visual_hull(tmp_path, capsys):
    fitted, truth, report = pipeline(tmp_path, 5)
    assert run("eval-iou", "--pair", fitted, truth) == 0
    assert json.loads(capsys.readouterr().out)["mean_iou"] >= 0.7
    assert report["final_loss"] <= report["loss_trace"][0]


def test_seeded_runs_are_reproducible(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = pipeline(tmp_path / "a", 5, max_iterations=30)
    b = pipeline(tmp_path / "b", 5, max_iterations=30)
    assert a[0].read_bytes() == b[0].read_bytes()
    assert a[2]["loss_trace"] == b[2]["loss_trace"]
