"""
Adaptive sphere tracing and path tracing
========================================

The tracer counts every primitive SDF evaluation, which makes step-policy
trade-offs measurable: on a two-scale scene the polynomial-gated adaptive
policy reaches the same hits as pure sphere tracing with ~30% fewer
evaluations. A small path tracer with Russian roulette and interior
absorption sits on top for volumetric looks.
"""

from pathlib import Path

import numpy as np

import microsdf as ms
from microsdf import sceneio
from microsdf.scenes import (
    bubble_cloud_camera,
    bubble_cloud_field,
    two_scale_gyroid_camera,
    two_scale_gyroid_field,
)

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# --- step policy comparison ----------------------------------------------------
field = two_scale_gyroid_field()
cam = two_scale_gyroid_camera(48, 48)
ro, rd = cam.rays()
for policy in [
    ms.PureSphere(),
    ms.Fixed(0.7),
    ms.AdaptiveEveryN(10),
    ms.AdaptivePoly(ms.FmCase(11, 5, 7, band=0.3)),
]:
    stats = ms.TraceStats()
    hit, t_hit, _ = ms.trace_batch(field, ro, rd, 1e-3, 40.0, policy,
                                   precision=1e-5, max_steps=6000, stats=stats)
    print(f"{type(policy).__name__:16s} evals={stats.sdf_evals:8d} "
          f"gradient probes={stats.gradient_evals:5d} backtracks={stats.backtracks}")

img, _ = ms.render(field, cam, ms.NormalColor(), t_max=40.0, max_steps=6000)
sceneio.write_image(out / "two_scale_normals.png", img)

# --- path tracing with depth control --------------------------------------------
bubbles = bubble_cloud_field()
bcam = bubble_cloud_camera(48, 48)
for depth in (2, 8):
    img, _ = ms.render(
        bubbles, bcam,
        ms.PathTrace(spp=8, max_depth=depth, albedo=(0.8, 0.85, 0.9), sky=(1, 1, 1)),
        seed=5, t_max=14.0, max_steps=500,
    )
    sceneio.write_image(out / f"bubbles_depth{depth}.png", img)
    print(f"depth {depth}: mean intensity {np.mean(img):.4f}")

# --- automatic depth calibration -------------------------------------------------
def render_at(depth):
    img, _ = ms.render(
        bubbles, bcam.from_dict({**bcam.to_dict(), "width": 12, "height": 12}),
        ms.PathTrace(spp=2, max_depth=depth, albedo=(0.8, 0.85, 0.9), sky=(1, 1, 1)),
        seed=5, t_max=14.0, max_steps=400,
    )
    return img

depth = ms.depth_autocalibrate(render_at, tol=0.02)
print("intensity stabilizes at max trace depth ~", depth)
print("wrote renders to", out)
