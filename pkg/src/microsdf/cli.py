"""Command-line entry point.

One command with subcommands for rendering, SDF sampling, dataset export,
fit jobs, step-policy benchmarks, and trace-depth calibration. Every
subcommand is deterministic under a fixed --seed: subsystems derive their
own sub-seeds by scrambling a component tag, so one knob reproduces the
whole artifact set byte for byte.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import recon as rc
from . import sceneio as io
from . import scenes
from . import tracer as tr
from .errors import ConfigError
from .hashgrid import derive_seed
from .periodic import MICROSTRUCTURES, microstructure


def _load_scene(spec_arg, width=None, height=None, seed=0):
    """Scene from 'builtin:NAME' or a JSON file path.

    Returns (field, camera, shading, policy, trace_opts, doc)."""
    if spec_arg.startswith("builtin:"):
        field, camera = scenes.builtin_scene(spec_arg[len("builtin:"):], width, height)
        return field, camera, tr.NormalColor(), tr.PureSphere(), {}, None
    path = Path(spec_arg)
    if not path.exists():
        raise ConfigError(f"scene file not found: {spec_arg}")
    doc = io.parse_scene_text(path.read_text())
    field = io.build_field(doc["geometry"])
    camera = io.build_camera(doc.get("camera"), width, height)
    shading = io.build_shading(doc.get("shading"), seed)
    policy = io.build_policy(doc.get("policy"))
    trace_opts = dict(doc.get("trace", {}))
    return field, camera, shading, policy, trace_opts, doc


def _parse_resolution(text):
    if text is None:
        return None, None
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise ConfigError(f"bad resolution {text!r}; expected WxH") from None


def _render_kwargs(trace_opts, policy, seed):
    kw = {
        "policy": policy,
        "precision": float(trace_opts.get("precision", 1e-4)),
        "t_min": float(trace_opts.get("t_min", 1e-3)),
        "t_max": float(trace_opts.get("t_max", 50.0)),
        "max_steps": int(trace_opts.get("max_steps", 512)),
        "seed": derive_seed(seed, "render"),
    }
    if trace_opts.get("bound_sphere"):
        c, r = trace_opts["bound_sphere"]
        kw["bound_sphere"] = (tuple(c), float(r))
    return kw


def cmd_render(args):
    w, h = _parse_resolution(args.resolution)
    field, camera, shading, policy, trace_opts, _ = _load_scene(
        args.scene, w, h, args.seed
    )
    if args.policy:
        policy = io.policy_by_name(args.policy)
    img, stats = tr.render(field, camera, shading, **_render_kwargs(trace_opts, policy, args.seed))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_image(out, img)
    if args.stats == "json":
        stats_path = out.with_suffix(out.suffix + ".stats.json")
        stats_path.write_text(io.canonical_json(stats.to_dict()))
        print(stats_path)
    print(out)
    return 0


def cmd_dump_sdf(args):
    w, h = _parse_resolution(args.resolution)
    field, _, _, _, _, _ = _load_scene(args.scene, w, h, args.seed)
    dims = tuple(int(v) for v in args.dims.split(","))
    bounds = [float(v) for v in args.bounds.split(",")]
    if len(dims) != 3 or len(bounds) != 6:
        raise ConfigError("--dims takes 3 integers and --bounds 6 floats")
    lo, hi = bounds[:3], bounds[3:]
    values = io.sample_volume(field, dims, lo, hi)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_volume(out, values, lo, hi)
    print(out)
    return 0


def cmd_dataset(args):
    name = args.name or args.microstructure
    if not name:
        raise ConfigError("name a microstructure (positional or --microstructure)")
    m = microstructure(name)
    args.name = name
    params = (
        tuple(float(v) for v in args.params.split(",")) if args.params else m.ground_truth
    )
    field = m.build(params)
    dims = tuple(int(v) for v in args.dims.split(","))
    lo, hi = (-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    vol_path = outdir / f"{args.name}.msdf"
    io.write_volume(vol_path, io.sample_volume(field, dims, lo, hi), lo, hi)
    print(vol_path)
    meta = {
        "name": args.name,
        "params": list(map(float, params)),
        "param_names": list(m.param_names),
        "bounds": [list(b) for b in m.bounds],
        "smooth": m.smooth,
        "dims": list(dims),
        "bounds_box": [list(lo), list(hi)],
    }
    (outdir / f"{args.name}.json").write_text(io.canonical_json(meta))
    if args.render:
        camera = rc.default_abs_camera(*_parse_resolution(args.resolution or "48x48"))
        img, _ = rc.render_microstructure(args.name, params, camera)
        img_path = outdir / f"{args.name}.ppm"
        io.write_image(img_path, img)
        print(img_path)
    return 0


def cmd_fit(args):
    doc = io.parse_scene_text(Path(args.job).read_text())
    name = doc["microstructure"]
    m = microstructure(name)
    cfg = rc.OptimizerConfig.from_dict(doc.get("optimizer", {}))
    if args.budget:
        cfg = rc.OptimizerConfig.from_dict({**cfg.to_dict(), "budget": args.budget})
    if args.seed is not None:
        cfg = rc.OptimizerConfig.from_dict(
            {**cfg.to_dict(), "seed": derive_seed(args.seed, "fit")}
        )
    phi0 = doc.get("init", list(m.init))
    gt = doc.get("ground_truth")
    mode = doc.get("mode", "sdf")

    if mode == "sdf":
        sdoc = doc.get("samples", {})
        rotation = np.asarray(sdoc["rotation"], dtype=float) if "rotation" in sdoc else None
        samples = rc.sample_points(
            dims=tuple(sdoc.get("dims", (8, 32, 32))),
            spacing=float(sdoc.get("spacing", 2.0 / 32)),
            sigma=float(sdoc.get("sigma", 1e-3)),
            seed=int(sdoc.get("seed", 0)),
            rotation=rotation,
        )
        target_doc = doc.get("target", {"kind": "self"})
        if target_doc.get("kind", "self") == "self":
            target = rc.make_sdf_target(name, target_doc.get("params"), samples)
            if gt is None:
                gt = list(target_doc.get("params") or m.ground_truth)
        else:
            values, lo, hi = io.read_volume(target_doc["path"])
            dims = values.shape
            pts = io.volume_lattice(dims, lo, hi).reshape(-1, 3)
            samples = rc.SampleSet(points=pts, dims=dims).with_values(values.ravel())
            target = samples
        report = rc.fit_parameters(name, target, cfg, phi0=phi0, ground_truth=gt)
    elif mode == "abs":
        cam_doc = doc.get("camera")
        camera = io.build_camera(cam_doc) if cam_doc else rc.default_abs_camera()
        target_doc = doc.get("target", {"kind": "self"})
        target, camera = rc.make_image_target(name, target_doc.get("params"), camera)
        if gt is None:
            gt = list(target_doc.get("params") or m.ground_truth)
        report = rc.analysis_by_synthesis(
            name, target, camera, cfg, phi0=phi0, ground_truth=gt
        )
    else:
        raise ConfigError(f"unknown fit mode {mode!r}")

    payload = report.to_dict()
    payload["microstructure"] = name
    payload["mode"] = mode
    if args.omit_timing:
        payload["wall_seconds"] = 0.0
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(io.canonical_json(payload))
    print(out)
    return 0


def cmd_bench(args):
    w, h = _parse_resolution(args.resolution or "32x32")
    field, camera, _, _, trace_opts, _ = _load_scene(args.scene, w, h, args.seed)
    ro, rd = camera.rays()
    rows = []
    for name in args.policies.split(","):
        policy = io.policy_by_name(name.strip())
        stats = tr.TraceStats()
        hit, _, _ = tr.trace_batch(
            field, ro, rd,
            float(trace_opts.get("t_min", 1e-3)),
            float(trace_opts.get("t_max", 50.0)),
            policy,
            precision=float(trace_opts.get("precision", 1e-5)),
            max_steps=int(trace_opts.get("max_steps", 4000)),
            stats=stats,
        )
        rows.append(
            {
                "policy": name.strip(),
                "hits": int(hit.sum()),
                "sdf_evals": stats.sdf_evals,
                "gradient_evals": stats.gradient_evals,
                "steps": stats.steps,
                "backtracks": stats.backtracks,
            }
        )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(out)
    return 0


def cmd_depth_calibrate(args):
    w, h = _parse_resolution(args.resolution or "16x16")
    field, camera, shading, policy, trace_opts, _ = _load_scene(
        args.scene, w, h, args.seed
    )
    if shading.mode != "path":
        shading = tr.PathTrace(spp=2, max_depth=1, sky=(1.0, 1.0, 1.0), albedo=(0.7, 0.7, 0.7))
    base_kwargs = _render_kwargs(trace_opts, policy, args.seed)

    def render_at(depth):
        cfg = tr.PathTrace(
            spp=shading.spp, max_depth=depth, material=shading.material,
            albedo=shading.albedo, ior=shading.ior, absorption=shading.absorption,
            sky=shading.sky, rr_start=shading.rr_start,
        )
        img, _ = tr.render(field, camera, cfg, **base_kwargs)
        return img

    depth = tr.depth_autocalibrate(render_at, tol=args.tol, max_depth=args.max_depth)
    payload = {"depth": depth, "tol": args.tol}
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(io.canonical_json(payload))
        print(out)
    else:
        print(json.dumps(payload))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="microsdf",
        description="Procedural multiscale SDF microstructures: synthesis, rendering, reconstruction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a scene to PPM/PNG")
    p.add_argument("scene", help="scene JSON file or builtin:NAME")
    p.add_argument("--out", required=True)
    p.add_argument("--resolution", help="WxH")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stats", choices=["json", "none"], default="none")
    p.add_argument("--policy", help="pure|fixed|every_n|poly|bijection")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("dump-sdf", help="sample a scene's field onto a lattice volume")
    p.add_argument("scene")
    p.add_argument("--out", required=True)
    p.add_argument("--dims", default="32,32,32")
    p.add_argument("--bounds", default="-1,-1,-1,1,1,1")
    p.add_argument("--resolution")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_dump_sdf)

    p = sub.add_parser("dataset", help="export a named microstructure volume (+render)")
    p.add_argument("name", nargs="?", choices=sorted(MICROSTRUCTURES))
    p.add_argument("--microstructure", choices=sorted(MICROSTRUCTURES),
                   help="alternative to the positional name")
    p.add_argument("--out", required=True)
    p.add_argument("--params", help="comma-separated parameter values")
    p.add_argument("--dims", default="32,32,32")
    p.add_argument("--render", action="store_true")
    p.add_argument("--resolution")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_dataset)

    p = sub.add_parser("fit", help="run a reconstruction job")
    p.add_argument("job", help="job JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--omit-timing", action="store_true",
                   help="zero the wall-clock field for byte-reproducible reports")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("bench", help="compare step policies on a scene (CSV)")
    p.add_argument("scene")
    p.add_argument("--out", required=True)
    p.add_argument("--policies", default="fixed,pure,poly")
    p.add_argument("--resolution")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("depth-calibrate", help="find the stable max trace depth")
    p.add_argument("scene")
    p.add_argument("--tol", type=float, default=0.01)
    p.add_argument("--max-depth", type=int, default=256)
    p.add_argument("--out")
    p.add_argument("--resolution")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_depth_calibrate)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
