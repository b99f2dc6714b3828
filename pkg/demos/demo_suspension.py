"""
Suspended particle clouds
=========================

One particle per grid cell, placed and sized by a deterministic cell hash.
This script builds a few cloud variants, probes their values, and renders
a small image of each.
"""

from pathlib import Path

import numpy as np

import microsdf as ms
from microsdf import sceneio

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# A grid with 1 mm cells at scene scale 1 m/unit: one particle per cell
# means 1e9 particles per cubic meter.
grid = ms.GridSpec(w=0.25)
print("number density at one per cell:", ms.GridSpec(w=0.001).number_density, "per m^3")

# --- a plain cloud with uniformly distributed sizes ----------------------
cloud = ms.suspended_sdf(grid, ms.ParticleRecipe(size_law=ms.UniformSize(0.3, 0.9)))
p = np.random.default_rng(0).uniform(-2, 2, size=(5, 3))
print("cloud samples (scene units):", np.round(cloud(p), 4))
# values never exceed half a cell width; the tracer backtracks past that
assert np.all(cloud(p) <= 0.5 * grid.w)

# --- normally distributed sizes ------------------------------------------
# mean 0.5 cells, sigma 0.05 (clamped at 4 sigma), like a measured powder;
# the Gaussian draw consumes two uniforms, so the cell hash provides five
grid5u = ms.GridSpec(w=0.25, coeffs=ms.HashCoefficients(n_uniforms=5))
normal_cloud = ms.suspended_sdf(grid5u, ms.ParticleRecipe(size_law=ms.NormalSize(0.5, 0.05)))

# --- positively correlated clusters via modular rejection ----------------
# keep cells only where every axis lies in the low half-period of 4 cells,
# which groups survivors into 2x2x2 blocks
clustered = ms.suspended_sdf(
    grid5u,
    ms.ParticleRecipe(size_law=ms.UniformSize(0.3, 0.8), accept_g=ms.modular_correlation_g(4)),
)

# --- two-level clusters ----------------------------------------------------
# a fine cloud carved by a coarse cloud: organic clumps of size ~n
clumps = ms.cluster_sdf(grid, ms.ParticleRecipe(size_law=ms.UniformSize(0.5, 0.9)), n=4.0)

# --- render each variant ---------------------------------------------------
cam = ms.Camera.look_at((-1.6, 0.5, 0.4), (0, 0, 0), fov_deg=50, width=96, height=96)
for name, field in [
    ("cloud_uniform", cloud),
    ("cloud_normal", normal_cloud),
    ("cloud_clustered", clustered),
    ("cloud_clumps", clumps),
]:
    img, stats = ms.render(field, cam, ms.Lambert(), t_max=6.0, max_steps=400)
    sceneio.write_image(out / f"{name}.png", img)
    print(f"{name}: {stats.sdf_evals} primitive evals, {stats.backtracks} backtracks")

print("wrote renders to", out)
