import numpy as np
import pytest

from microsdf import fields as fl
from microsdf import sceneio as io
from microsdf.errors import ConfigError


class TestCanonicalJson:
    def test_roundtrip_byte_identical(self):
        doc = {"schema": 1, "b": [1, 2.5], "a": {"y": None, "x": "s"}}
        text = io.canonical_json(doc)
        again = io.canonical_json(io.parse_scene_text(text))
        assert text == again

    def test_parse_error_carries_position(self):
        with pytest.raises(ConfigError) as e:
            io.parse_scene_text('{"schema": 1,\n  "bad": }')
        assert "line 2" in str(e.value)


class TestGeometryTree:
    def probe(self):
        return np.random.default_rng(0).uniform(-2, 2, size=(200, 3))

    def test_primitives(self):
        f = io.build_field({"type": "sphere", "center": [0, 0, 0], "radius": 1.0})
        ref = fl.sphere((0, 0, 0), 1.0)
        p = self.probe()
        assert np.array_equal(f(p), ref(p))

    def test_boolean_tree(self):
        doc = {
            "type": "union",
            "a": {"type": "sphere", "center": [0.5, 0, 0], "radius": 0.8},
            "b": {"type": "sphere", "center": [-0.5, 0, 0], "radius": 0.8},
        }
        f = io.build_field(doc)
        ref = fl.union(fl.sphere((0.5, 0, 0), 0.8), fl.sphere((-0.5, 0, 0), 0.8))
        p = self.probe()
        assert np.array_equal(f(p), ref(p))

    def test_suspension_from_config(self):
        doc = {
            "type": "suspension",
            "grid": {"w": 0.5},
            "recipe": {"size_law": {"kind": "uniform", "lo": 0.2, "hi": 0.6}},
        }
        f = io.build_field(doc)
        p = self.probe()
        v = f(p)
        assert np.all(v <= 0.25 + 1e-15)
        assert f.cost == 8

    def test_microstructure_node(self):
        f = io.build_field({"type": "microstructure", "name": "gyroid3d"})
        from microsdf.periodic import gyroid3d

        p = self.probe() * 0.01
        assert np.allclose(f(p), gyroid3d(p, 100.0, 7.0, 1.2), atol=1e-15)

    def test_agglomerate_with_rule(self):
        doc = {
            "type": "agglomerate",
            "grid": {"w": 1.0, "neighborhood": "moore27"},
            "particle": {"c": [0.5, 0.5, 0.5], "r": 0.9},
            "rule": {
                "polys": [{"monomials": [[[1, 0, 0], 1]]}],
                "moduli": [2],
                "classes": [[[1, 0]]],
            },
        }
        f = io.build_field(doc)
        assert f.cost == 27
        assert np.isfinite(f(np.zeros(3)))

    def test_unknown_type(self):
        with pytest.raises(ConfigError):
            io.build_field({"type": "torus"})


class TestVolumeFormat:
    def test_roundtrip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(1)
        values = rng.normal(size=(4, 5, 6)).astype("<f4")
        path = tmp_path / "v.msdf"
        io.write_volume(path, values, (-1, -1, -1), (1, 1, 1))
        back, lo, hi = io.read_volume(path)
        assert np.array_equal(back, values)
        assert np.allclose(lo, [-1, -1, -1]) and np.allclose(hi, [1, 1, 1])

    def test_header_layout(self, tmp_path):
        path = tmp_path / "v.msdf"
        io.write_volume(path, np.zeros((2, 3, 4), dtype=np.float32), (0, 0, 0), (1, 2, 3))
        blob = path.read_bytes()
        assert blob[:4] == b"MSDF"
        import struct

        dims = struct.unpack("<3I", blob[4:16])
        assert dims == (2, 3, 4)
        assert len(blob) == 4 + 12 + 24 + 2 * 3 * 4 * 4

    def test_magic_check(self, tmp_path):
        path = tmp_path / "bad.msdf"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ConfigError):
            io.read_volume(path)

    def test_sampled_volume_matches_field(self, tmp_path):
        f = fl.sphere((0, 0, 0), 0.5)
        vals = io.sample_volume(f, (8, 8, 8), (-1, -1, -1), (1, 1, 1))
        pts = io.volume_lattice((8, 8, 8), (-1, -1, -1), (1, 1, 1))
        rng = np.random.default_rng(2)
        for _ in range(100):
            i, j, k = rng.integers(0, 8, size=3)
            assert vals[i, j, k] == pytest.approx(float(f(pts[i, j, k])), abs=1e-12)


class TestImages:
    def test_ppm_roundtrip(self, tmp_path):
        img = np.random.default_rng(3).uniform(size=(5, 7, 3))
        path = tmp_path / "img.ppm"
        io.write_ppm(path, img)
        back = io.read_ppm(path)
        assert back.shape == (5, 7, 3)
        assert np.array_equal(back, io.to_uint8(img))

    def test_ppm_deterministic_bytes(self, tmp_path):
        img = np.random.default_rng(4).uniform(size=(6, 6, 3))
        a, b = tmp_path / "a.ppm", tmp_path / "b.ppm"
        io.write_ppm(a, img)
        io.write_ppm(b, img)
        assert a.read_bytes() == b.read_bytes()

    def test_png_valid_signature_and_crc(self, tmp_path):
        img = np.random.default_rng(5).uniform(size=(4, 4, 3))
        path = tmp_path / "img.png"
        io.write_png(path, img)
        blob = path.read_bytes()
        assert blob[:8] == b"\x89PNG\r\n\x1a\n"
        # zlib payload decompresses to H * (1 + W*3) bytes
        import struct as st
        import zlib

        pos = 8
        idat = b""
        while pos < len(blob):
            length = st.unpack(">I", blob[pos : pos + 4])[0]
            tag = blob[pos + 4 : pos + 8]
            payload = blob[pos + 8 : pos + 8 + length]
            crc = st.unpack(">I", blob[pos + 8 + length : pos + 12 + length])[0]
            assert crc == (zlib.crc32(tag + payload) & 0xFFFFFFFF)
            if tag == b"IDAT":
                idat += payload
            pos += 12 + length
        assert len(zlib.decompress(idat)) == 4 * (1 + 4 * 3)

    def test_gamma_encoding(self):
        assert io.to_uint8(np.array([[[1.0, 0.0, 0.5]]]))[0, 0, 0] == 255
        mid = io.to_uint8(np.array([[[0.5, 0.5, 0.5]]]))[0, 0, 0]
        assert mid == round(0.5 ** (1 / 2.2) * 255)


class TestPolicyShadingBuilders:
    def test_policy_names(self):
        for name in ["pure", "fixed", "every_n", "poly", "bijection"]:
            io.policy_by_name(name)
        with pytest.raises(ConfigError):
            io.policy_by_name("warp9")

    def test_shading_builders(self):
        assert io.build_shading(None).mode == "normal"
        assert io.build_shading({"mode": "lambert"}).mode == "lambert"
        pt_cfg = io.build_shading({"mode": "path", "spp": 2, "max_depth": 3})
        assert pt_cfg.spp == 2 and pt_cfg.max_depth == 3
