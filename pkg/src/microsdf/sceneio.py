"""Scene/job configs and file formats.

Scene configs are JSON documents with a schema version; the geometry is a
tagged tree of field constructors. Emission is canonical (sorted keys,
fixed separators), so parse -> emit round-trips byte-identically, which
the CLI relies on for reproducibility checks.

Volume files ("MSDF") are flat little-endian binaries: magic, u32 dims x3,
f32 bounds x6 (lo triple then hi triple), then f32 samples in C order.
Images are written as binary PPM (P6) with a fixed 2.2 gamma, or PNG.
"""

import json
import struct
import zlib

import numpy as np

from . import agglomerate as ag
from . import fields as fl
from . import particulate as pt
from . import periodic as pe
from . import piling as pl
from . import tracer as tr
from .errors import ConfigError

SCHEMA_VERSION = 1
MSDF_MAGIC = b"MSDF"


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def parse_scene_text(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"scene parse error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("scene config must be a JSON object")
    if doc.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {doc.get('schema')!r}")
    return doc


# ---------------------------------------------------------------------------
# offset / warp / acceptance constructors


def build_offset(d):
    kind = d.get("kind", "const")
    if kind == "const":
        c = float(d["value"])
        return fl.OffsetFunction(lambda p, c=c: np.full(p.shape[:-1], c), lipschitz=0.0)
    if kind == "sine":
        amp = float(d["amplitude"])
        freq = float(d["frequency"])
        axis = int(d.get("axis", 0))
        return fl.OffsetFunction(
            lambda p: amp * np.sin(freq * p[..., axis]), lipschitz=abs(amp * freq)
        )
    raise ConfigError(f"unknown offset kind {kind!r}")


def build_warp(d):
    kind = d.get("kind", "const")
    if kind == "const":
        shift = np.asarray(d["shift"], dtype=float)
        return fl.WarpFunction(lambda p: np.broadcast_to(shift, p.shape), lipschitz=0.0)
    if kind == "multiphase":
        return pt.multiphase_warp(
            np.asarray(d["amplitude"], dtype=float), lipschitz=float(d["lipschitz"])
        )
    raise ConfigError(f"unknown warp kind {kind!r}")


def build_size_law(d):
    kind = d.get("kind", "uniform")
    if kind == "fixed":
        return pt.FixedSize(float(d["s"]))
    if kind == "uniform":
        return pt.UniformSize(float(d.get("lo", 0.0)), float(d.get("hi", 0.999)))
    if kind == "normal":
        return pt.NormalSize(float(d["mu"]), float(d["sigma"]))
    raise ConfigError(f"unknown size law {kind!r}")


def build_accept(d):
    if d is None:
        return None
    kind = d.get("kind", "modular")
    if kind == "modular":
        return pt.modular_correlation_g(int(d["n"]))
    if kind == "const":
        rate = float(d["rate"])
        return lambda p, rate=rate: np.full(np.asarray(p).shape[:-1], rate)
    raise ConfigError(f"unknown acceptance kind {kind!r}")


def build_recipe(d):
    return pt.ParticleRecipe(
        shape=d.get("shape", "sphere"),
        size_law=build_size_law(d.get("size_law", {})),
        accept_g=build_accept(d.get("accept")),
        center_box=tuple(map(tuple, d["center_box"])) if d.get("center_box") else None,
        capsule_aspect=float(d.get("capsule_aspect", 0.5)),
        ellipsoid_aspect=float(d.get("ellipsoid_aspect", 2.0)),
    )


def build_grid(d):
    return pt.GridSpec.from_dict(d)


def build_rule(d):
    if d.get("kind") == "bezier_gel":
        return ag.bezier_gel_rule(
            int(d["n1"]), int(d["n2"]), int(d["n"]), float(d["t"]),
            t_mode=d.get("t_mode", "fixed"),
        )
    polys = tuple(ag.IntPolynomial.from_dict(p) for p in d["polys"])
    mode = d.get("mode", "congruence")
    if mode == "inequality":
        bounds = tuple(
            (float(lo) if lo is not None else -np.inf, float(hi) if hi is not None else np.inf)
            for lo, hi in d["bounds"]
        )
        return ag.LatticeRule(
            polys=polys, bounds=bounds, mode="inequality",
            inner_op=d.get("inner", ag.AND), outer_op=d.get("outer", ag.AND),
        )
    return ag.LatticeRule(
        polys=polys,
        moduli=tuple(int(m) for m in d["moduli"]),
        classes=tuple(tuple(tuple(c) for c in cls) for cls in d["classes"]),
        inner_op=d.get("inner", ag.OR),
        outer_op=d.get("outer", ag.OR),
    )


def build_theta(d):
    if d is None:
        return pl.ZERO_POLY
    kind = d.get("kind", "poly")
    if kind == "poly":
        return pl.Polynomial3.from_dict(d)
    if kind == "gyroid":
        freq = float(d.get("frequency", 1.0))
        amp = float(d.get("amplitude", 1.0))

        def theta(p, k=freq, a=amp):
            x = np.asarray(p, dtype=float) * k
            return a * (
                np.sin(x[..., 0]) * np.cos(x[..., 1])
                + np.sin(x[..., 1]) * np.cos(x[..., 2])
                + np.sin(x[..., 2]) * np.cos(x[..., 0])
            )

        return theta
    raise ConfigError(f"unknown angle field kind {kind!r}")


# ---------------------------------------------------------------------------
# the geometry tree


def build_field(d):
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError("geometry nodes are objects with a 'type' tag")
    t = d["type"]
    if t == "sphere":
        return fl.sphere(d.get("center", (0, 0, 0)), float(d["radius"]))
    if t == "ellipsoid":
        return fl.ellipsoid(d.get("center", (0, 0, 0)), d["semi_axes"])
    if t == "cylinder":
        return fl.cylinder(d["axis"], float(d["radius"]))
    if t == "plane":
        return fl.plane(d["normal"], float(d.get("offset", 0.0)))
    if t == "union":
        return fl.union(build_field(d["a"]), build_field(d["b"]))
    if t == "intersection":
        return fl.intersection(build_field(d["a"]), build_field(d["b"]))
    if t == "smooth_min":
        return fl.smooth_min(build_field(d["a"]), build_field(d["b"]), float(d["k"]))
    if t == "offset":
        return fl.offset(build_field(d["field"]), build_offset(d["offset"]))
    if t == "warp":
        return fl.warp(build_field(d["field"]), build_warp(d["warp"]))
    if t == "translate":
        return fl.translate(build_field(d["field"]), d["shift"])
    if t == "suspension":
        f = build_offset(d["offset"]) if d.get("offset") else None
        h = build_warp(d["warp"]) if d.get("warp") else None
        return pt.suspended_sdf(build_grid(d["grid"]), build_recipe(d.get("recipe", {})), f, h)
    if t == "clusters":
        return pt.cluster_sdf(
            build_grid(d["grid"]), build_recipe(d.get("recipe", {})), float(d["n"])
        )
    if t == "agglomerate":
        particle = ag.AggloParticle(
            c=tuple(d.get("particle", {}).get("c", (0.5, 0.5, 0.5))),
            r=float(d.get("particle", {}).get("r", 0.5)),
        )
        f = build_offset(d["offset"]) if d.get("offset") else None
        rule = build_rule(d["rule"]) if d.get("rule") else None
        grid = build_grid(d["grid"])
        if rule is None:
            return ag.agglomerate_sdf(grid, particle, f)
        return ag.subset_sdf(grid, particle, rule, f, gate=d.get("gate", "per_cell"))
    if t == "meso_surface":
        particle = ag.AggloParticle(
            c=tuple(d.get("particle", {}).get("c", (0.5, 0.5, 0.5))),
            r=float(d.get("particle", {}).get("r", 0.5)),
        )
        polys = [ag.IntPolynomial.from_dict(p) for p in d["polys"]]
        bounds = [
            (float(lo) if lo is not None else -np.inf, float(hi) if hi is not None else np.inf)
            for lo, hi in d["bounds"]
        ]
        return ag.meso_surface_sdf(build_grid(d["grid"]), particle, polys, bounds)
    if t == "pile":
        cfg = pl.PilingConfig(
            theta=build_theta(d.get("theta")),
            deform=pl.Polynomial3.from_dict(d["deform"]) if d.get("deform") else pl.ZERO_POLY,
            noise=d.get("noise", "perlin"),
            rotation_axis=d.get("rotation_axis", "z"),
            estimate_box=tuple(map(tuple, d.get("estimate_box", ((-5,) * 3, (5,) * 3)))),
        )
        return pl.piling_sdf(build_grid(d["grid"]), cfg)
    if t == "microstructure":
        m = pe.microstructure(d["name"])
        params = d.get("params", m.ground_truth)
        return m.build(params)
    if t == "tpms":
        return pe.tpms_field(
            d["name"], cell=float(d.get("cell", 2 * np.pi)), thickness=float(d.get("thickness", 0.0))
        )
    if t == "sc":
        terms = tuple(
            tuple(
                pe.TrigTerm(
                    func=f.get("func", "sin"),
                    coord=int(f.get("coord", 0)),
                    amplitude=float(f.get("amplitude", 1.0)),
                    frequency=float(f.get("frequency", 1.0)),
                    phase=float(f.get("phase", 0.0)),
                    power=int(f.get("power", 1)),
                )
                for f in product
            )
            for product in d["terms"]
        )
        return pe.sc_field(pe.SCFormula(terms=terms, width=float(d.get("width", 0.0))))
    if t == "bounded":
        inner = build_field(d["field"])
        return fl.intersection(inner, fl.sphere((0, 0, 0), float(d.get("radius", 1.0))))
    raise ConfigError(f"unknown geometry type {t!r}")


def build_shading(d, seed=0):
    d = d or {"mode": "normal"}
    mode = d.get("mode", "normal")
    if mode == "normal":
        return tr.NormalColor(background=tuple(d.get("background", (0, 0, 0))))
    if mode == "lambert":
        return tr.Lambert(
            light_dir=tuple(d.get("light_dir", (0.4, -1.0, 0.3))),
            light_color=tuple(d.get("light_color", (1, 1, 1))),
            albedo=tuple(d.get("albedo", (0.8, 0.8, 0.8))),
            ambient=tuple(d.get("ambient", (0.05, 0.05, 0.05))),
            background=tuple(d.get("background", (0, 0, 0))),
        )
    if mode == "path":
        return tr.PathTrace(
            spp=int(d.get("spp", 4)),
            max_depth=int(d.get("max_depth", 8)),
            material=d.get("material", "lambert"),
            albedo=tuple(d.get("albedo", (0.75, 0.75, 0.75))),
            ior=float(d.get("ior", 1.31)),
            absorption=tuple(d.get("absorption", (0.2, 0.1, 0.05))),
            sky=tuple(d.get("sky", (1, 1, 1))),
            rr_start=int(d.get("rr_start", 2)),
        )
    raise ConfigError(f"unknown shading mode {mode!r}")


def build_policy(d):
    d = d or {"kind": "pure"}
    kind = d.get("kind", "pure")
    if kind == "pure":
        return tr.PureSphere()
    if kind == "fixed":
        return tr.Fixed(float(d.get("delta", 0.5)))
    if kind == "every_n":
        return tr.AdaptiveEveryN(int(d.get("n", 10)), float(d.get("delta_min", 0.25)))
    if kind == "poly":
        g = d.get("gate", {})
        if g.get("kind", "fm") == "fm":
            gate = tr.FmCase(
                float(g.get("n1", 11)), float(g.get("n2", 5)), float(g.get("n3", 7)),
                float(g.get("band", 0.05)),
            )
        else:
            gate = tr.ScCase(float(g.get("level", 0.5)), float(g.get("tol", 0.05)))
        return tr.AdaptivePoly(gate, float(d.get("delta_min", 0.25)))
    if kind == "bijection":
        return tr.Bijection(int(d.get("num_steps", 256)))
    raise ConfigError(f"unknown step policy {kind!r}")


def policy_by_name(name):
    named = {
        "pure": {"kind": "pure"},
        "fixed": {"kind": "fixed"},
        "every_n": {"kind": "every_n"},
        "poly": {"kind": "poly", "gate": {"kind": "fm", "band": 0.3}},
        "bijection": {"kind": "bijection", "num_steps": 4096},
    }
    if name not in named:
        raise ConfigError(f"unknown policy name {name!r}; choose from {sorted(named)}")
    return build_policy(named[name])


def build_camera(d, width=None, height=None):
    d = dict(d or {"position": (0, 0, -3), "look_at": (0, 0, 0)})
    if width:
        d["width"] = width
    if height:
        d["height"] = height
    return tr.Camera.from_dict(d)


# ---------------------------------------------------------------------------
# volumes


def write_volume(path, values, lo, hi):
    """values: float array shaped (nx, ny, nz); bounds lo/hi triples."""
    values = np.asarray(values, dtype="<f4")
    if values.ndim != 3:
        raise ConfigError("volume values must be 3-dimensional")
    with open(path, "wb") as f:
        f.write(MSDF_MAGIC)
        f.write(struct.pack("<3I", *values.shape))
        f.write(struct.pack("<6f", *np.asarray(lo, dtype=float), *np.asarray(hi, dtype=float)))
        f.write(values.tobytes(order="C"))


def read_volume(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MSDF_MAGIC:
            raise ConfigError(f"not a volume file (magic {magic!r})")
        dims = struct.unpack("<3I", f.read(12))
        bounds = struct.unpack("<6f", f.read(24))
        data = np.frombuffer(f.read(), dtype="<f4")
    if data.size != dims[0] * dims[1] * dims[2]:
        raise ConfigError("volume payload size does not match header dims")
    values = data.reshape(dims)
    return values, np.array(bounds[:3]), np.array(bounds[3:])


def volume_lattice(dims, lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    axes = [np.linspace(lo[i], hi[i], dims[i]) for i in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def sample_volume(field, dims, lo, hi):
    pts = volume_lattice(dims, lo, hi)
    return field(pts.reshape(-1, 3)).reshape(dims)


# ---------------------------------------------------------------------------
# images


GAMMA = 2.2


def to_uint8(img):
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    encoded = np.power(img, 1.0 / GAMMA)
    return np.round(encoded * 255.0).astype(np.uint8)


def write_ppm(path, img):
    data = to_uint8(img)
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path):
    with open(path, "rb") as f:
        blob = f.read()
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ConfigError("not a binary PPM file")
    w, h = map(int, parts[1].split())
    data = np.frombuffer(parts[3], dtype=np.uint8)[: w * h * 3]
    return data.reshape(h, w, 3)


def write_png(path, img):
    """Minimal 8-bit RGB PNG writer (no filtering)."""
    data = to_uint8(img)
    h, w = data.shape[:2]
    raw = b"".join(b"\x00" + data[row].tobytes() for row in range(h))

    def chunk(tag, payload):
        return (
            struct.pack(">I", len(payload))
            + tag
            + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
        )

    header = struct.pack(">2I5B", w, h, 8, 2, 0, 0, 0)
    with open(path, "wb") as f:
        f.write(b"\x89PNG\r\n\x1a\n")
        f.write(chunk(b"IHDR", header))
        f.write(chunk(b"IDAT", zlib.compress(raw, 9)))
        f.write(chunk(b"IEND", b""))


def write_image(path, img):
    path = str(path)
    if path.endswith(".png"):
        write_png(path, img)
    else:
        write_ppm(path, img)
