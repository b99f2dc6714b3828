import json
from pathlib import Path

import numpy as np
import pytest

from microsdf import sceneio as io
from microsdf.cli import main

MINIMAL_SCENE = {
    "schema": 1,
    "geometry": {"type": "sphere", "center": [0, 0, 0], "radius": 1.0},
    "camera": {"position": [0, 0, -3], "look_at": [0, 0, 0], "width": 64, "height": 64},
    "shading": {"mode": "normal"},
    "trace": {"t_max": 10.0},
}


def write_scene(tmp_path, doc=None, name="scene.json"):
    p = tmp_path / name
    p.write_text(io.canonical_json(doc or MINIMAL_SCENE))
    return p


class TestRender:
    def test_minimal_sphere_scene(self, tmp_path):
        scene = write_scene(tmp_path)
        out = tmp_path / "img.ppm"
        rc = main(["render", str(scene), "--out", str(out), "--seed", "1"])
        assert rc == 0
        img = io.read_ppm(out)
        assert img.shape == (64, 64, 3)
        assert np.any(img[32, 32] > 0)  # center pixel hits the sphere

    def test_stats_json_emitted(self, tmp_path):
        scene = write_scene(tmp_path)
        out = tmp_path / "img.ppm"
        rc = main(["render", str(scene), "--out", str(out), "--stats", "json"])
        assert rc == 0
        stats = json.loads((tmp_path / "img.ppm.stats.json").read_text())
        assert stats["sdf_evals"] > 0

    def test_resolution_flag(self, tmp_path):
        scene = write_scene(tmp_path)
        out = tmp_path / "img.ppm"
        main(["render", str(scene), "--out", str(out), "--resolution", "16x8"])
        assert io.read_ppm(out).shape == (8, 16, 3)

    def test_rerun_byte_identical(self, tmp_path):
        scene = write_scene(tmp_path)
        a, b = tmp_path / "a.ppm", tmp_path / "b.ppm"
        main(["render", str(scene), "--out", str(a), "--seed", "7"])
        main(["render", str(scene), "--out", str(b), "--seed", "7"])
        assert a.read_bytes() == b.read_bytes()

    def test_png_output(self, tmp_path):
        scene = write_scene(tmp_path)
        out = tmp_path / "img.png"
        main(["render", str(scene), "--out", str(out)])
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_builtin_scene(self, tmp_path):
        out = tmp_path / "b.ppm"
        rc = main(["render", "builtin:unit-sphere", "--out", str(out),
                   "--resolution", "16x16"])
        assert rc == 0

    def test_parse_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        rc = main(["render", str(bad), "--out", str(tmp_path / "x.ppm")])
        assert rc == 2


class TestDumpSdf:
    def test_volume_reload_and_spot_values(self, tmp_path):
        scene = write_scene(tmp_path)
        out = tmp_path / "vol.msdf"
        rc = main(["dump-sdf", str(scene), "--out", str(out), "--dims", "12,12,12",
                   "--bounds=-1,-1,-1,1,1,1"])
        assert rc == 0
        values, lo, hi = io.read_volume(out)
        assert values.shape == (12, 12, 12)
        # center of the lattice sits inside the unit sphere
        assert values[6, 6, 6] < 0

    def test_rerun_byte_identical(self, tmp_path):
        scene = write_scene(tmp_path)
        a, b = tmp_path / "a.msdf", tmp_path / "b.msdf"
        main(["dump-sdf", str(scene), "--out", str(a)])
        main(["dump-sdf", str(scene), "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestDataset:
    def test_names_and_default_params(self, tmp_path):
        rc = main(["dataset", "gyroid3d", "--out", str(tmp_path), "--dims", "8,8,8"])
        assert rc == 0
        meta = json.loads((tmp_path / "gyroid3d.json").read_text())
        assert meta["params"] == [100.0, 7.0, 1.2]
        values, lo, hi = io.read_volume(tmp_path / "gyroid3d.msdf")
        assert values.shape == (8, 8, 8)

    def test_volume_matches_direct_evaluation(self, tmp_path):
        main(["dataset", "gyroid1d", "--out", str(tmp_path), "--dims", "8,8,8"])
        values, lo, hi = io.read_volume(tmp_path / "gyroid1d.msdf")
        from microsdf.periodic import gyroid1d

        pts = io.volume_lattice((8, 8, 8), lo, hi)
        rng = np.random.default_rng(0)
        for _ in range(100):
            i, j, k = rng.integers(0, 8, size=3)
            expect = gyroid1d(pts[i, j, k], 100.0)
            assert values[i, j, k] == pytest.approx(expect, abs=1e-6)

    def test_param_override(self, tmp_path):
        rc = main(["dataset", "gyroid1d", "--out", str(tmp_path), "--dims", "4,4,4",
                   "--params", "50"])
        assert rc == 0
        meta = json.loads((tmp_path / "gyroid1d.json").read_text())
        assert meta["params"] == [50.0]

    def test_unknown_name_rejected(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["dataset", "nonexistent", "--out", str(tmp_path)])

    def test_microstructure_flag_form(self, tmp_path):
        rc = main(["dataset", "--microstructure", "gyroid3d", "--out", str(tmp_path),
                   "--dims", "4,4,4", "--params", "100,7,1.2"])
        assert rc == 0
        meta = json.loads((tmp_path / "gyroid3d.json").read_text())
        assert meta["params"] == [100.0, 7.0, 1.2]


class TestFit:
    def job(self, tmp_path):
        doc = {
            "schema": 1,
            "microstructure": "gyroid1d",
            "mode": "sdf",
            "optimizer": {"kind": "cma_es", "budget": 400, "seed": 3, "f_target": -10.0},
            "samples": {"dims": [2, 12, 12], "sigma": 0.001, "seed": 0},
            "target": {"kind": "self"},
        }
        p = tmp_path / "job.json"
        p.write_text(io.canonical_json(doc))
        return p

    def test_fit_job_emits_report(self, tmp_path):
        job = self.job(tmp_path)
        out = tmp_path / "report.json"
        rc = main(["fit", str(job), "--out", str(out)])
        assert rc == 0
        rep = json.loads(out.read_text())
        assert rep["microstructure"] == "gyroid1d"
        assert rep["evals"] > 0
        assert rep["loss_trace"]

    def test_omit_timing_reproducible(self, tmp_path):
        job = self.job(tmp_path)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(["fit", str(job), "--out", str(a), "--omit-timing"])
        main(["fit", str(job), "--out", str(b), "--omit-timing"])
        assert a.read_bytes() == b.read_bytes()

    def test_volume_target(self, tmp_path):
        main(["dataset", "gyroid1d", "--out", str(tmp_path), "--dims", "12,12,12"])
        doc = {
            "schema": 1,
            "microstructure": "gyroid1d",
            "mode": "sdf",
            "optimizer": {"kind": "powell", "budget": 60},
            "target": {"kind": "volume", "path": str(tmp_path / "gyroid1d.msdf")},
        }
        job = tmp_path / "voljob.json"
        job.write_text(io.canonical_json(doc))
        out = tmp_path / "volreport.json"
        rc = main(["fit", str(job), "--out", str(out)])
        assert rc == 0
        assert json.loads(out.read_text())["evals"] > 0


class TestBench:
    def test_three_policy_rows(self, tmp_path):
        out = tmp_path / "bench.csv"
        rc = main(["bench", "builtin:two-scale-gyroid", "--out", str(out),
                   "--policies", "fixed,pure,poly", "--resolution", "8x8"])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 4  # header + 3 rows
        assert lines[0].startswith("policy,")
        names = [l.split(",")[0] for l in lines[1:]]
        assert names == ["fixed", "pure", "poly"]

    def test_rerun_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            main(["bench", "builtin:two-scale-gyroid", "--out", str(p),
                  "--policies", "pure,poly", "--resolution", "8x8"])
        assert a.read_bytes() == b.read_bytes()


class TestDepthCalibrate:
    def test_opaque_scene_small_depth(self, tmp_path):
        scene = write_scene(
            tmp_path,
            {
                "schema": 1,
                "geometry": {"type": "sphere", "center": [0, 0, 0], "radius": 1.0},
                "camera": {"position": [0, 0, -2], "look_at": [0, 0, 0],
                            "width": 8, "height": 8, "fov_deg": 30},
                "shading": {"mode": "path", "spp": 2, "max_depth": 1,
                             "albedo": [0.3, 0.3, 0.3], "sky": [0.8, 0.8, 0.8]},
                "trace": {"t_max": 10.0},
            },
        )
        out = tmp_path / "depth.json"
        rc = main(["depth-calibrate", str(scene), "--tol", "0.05", "--out", str(out)])
        assert rc == 0
        assert json.loads(out.read_text())["depth"] <= 4
