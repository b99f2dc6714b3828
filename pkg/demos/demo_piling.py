"""
Granular piles from lattice deformation
=======================================

Maximal spheres fill every cell; rock-pile structure comes purely from
deforming the query point with a rotation field plus polynomial * noise
displacement. No collision handling anywhere.
"""

from pathlib import Path

import numpy as np

import microsdf as ms
from microsdf import sceneio
from microsdf.piling import PilingConfig, poly3

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

grid = ms.GridSpec(w=0.4, neighborhood="moore27")

# --- the two noise generators -----------------------------------------------
p = np.random.default_rng(0).uniform(-3, 3, size=(4, 3))
print("lattice gradient noise:", np.round(ms.perlin(p), 4))
sparse = ms.SparseConvolutionNoise(support=0.5)
print("sparse convolution noise:", np.round(sparse(p), 4))

# --- undeformed lattice: perfectly touching spheres -------------------------
touching = ms.piling_sdf(grid, PilingConfig())

# --- convex-to-concave grains via polynomial x noise -------------------------
# P(p) = px + py + pz ramps the deformation across the volume, so grains
# transition smoothly from rounded to pitted
graded = ms.piling_sdf(
    grid,
    PilingConfig(
        deform=poly3({(1, 0, 0): 0.12, (0, 1, 0): 0.12, (0, 0, 1): 0.12}),
        noise="perlin",
        estimate_box=((-4, -4, -4), (4, 4, 4)),
    ),
)

# --- rotation by a spatially varying angle -----------------------------------
twisted = ms.piling_sdf(
    grid,
    PilingConfig(
        theta=poly3({(0, 1, 0): 0.35}),
        deform=poly3({(0, 0, 0): 0.15}),
        noise="sparse",
        estimate_box=((-4, -4, -4), (4, 4, 4)),
    ),
)

cam = ms.Camera.look_at((-2.8, 1.4, 2.0), (0, 0, 0), fov_deg=45, width=96, height=96)
for name, field in [("pile_touching", touching), ("pile_graded", graded), ("pile_twisted", twisted)]:
    print(f"{name}: declared step bound {field.lipschitz:.2f}")
    img, stats = ms.render(field, cam, ms.Lambert(light_dir=(0.3, -1, 0.4)), t_max=8.0,
                           max_steps=500)
    sceneio.write_image(out / f"{name}.png", img)

print("wrote renders to", out)
