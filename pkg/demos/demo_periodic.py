"""
Grid-free periodic microstructures
==================================

Sine/cosine products evaluate one closed form per query: no neighbor
loops, so these are the cheapest fields in the package. The six named
microstructures double as the reconstruction benchmarks, each with its
frozen ground-truth parameters.
"""

from pathlib import Path

import numpy as np

import microsdf as ms
from microsdf import sceneio
from microsdf.recon import bounded_by_unit_sphere, default_abs_camera

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

# --- TPMS level sets ---------------------------------------------------------
for name in ("gyroid", "diamond", "primitive"):
    f = ms.tpms_field(name, cell=0.8, thickness=0.0)
    img, _ = ms.render(
        bounded_by_unit_sphere(f),
        ms.Camera.look_at((0, 0, -2.4), (0, 0, 0), fov_deg=50, width=96, height=96),
        ms.Lambert(light_dir=(0.3, -0.8, 0.6)),
        bound_sphere=((0, 0, 0), 1.0),
        t_max=6.0,
    )
    sceneio.write_image(out / f"tpms_{name}.png", img)

# --- the registered microstructures -------------------------------------------
for name, m in ms.MICROSTRUCTURES.items():
    print(f"{name}: {len(m.param_names)} parameters, ground truth {np.round(m.ground_truth, 3)}")
    field = m.build(m.ground_truth)
    cam = default_abs_camera(96, 96)
    img, _ = ms.render(
        bounded_by_unit_sphere(field), cam, ms.NormalColor(),
        bound_sphere=((0, 0, 0), 1.0), t_max=6.0, max_steps=256,
    )
    sceneio.write_image(out / f"micro_{name}.png", img)

# --- the general sine-cosine formula ------------------------------------------
# sum of two products: sin(3x)cos(3y) + 0.5 sin(3z)^2, width -0.2
formula = ms.SCFormula(
    terms=(
        (ms.TrigTerm("sin", 0, frequency=3.0), ms.TrigTerm("cos", 1, frequency=3.0)),
        (ms.TrigTerm("sin", 2, amplitude=np.sqrt(0.5), frequency=3.0, power=2),),
    ),
    width=-0.2,
)
field = ms.sc_field(formula)
print("sc formula at origin:", ms.sc_eval(formula, np.zeros(3)))
print("declared gradient bound:", round(field.lipschitz, 3))

# every eval call is exactly one formula evaluation (no neighbor loop)
for _ in range(3):
    field(np.zeros(3))
print("formula evals after 3 calls:", field.stats["formula_evals"])
print("wrote renders to", out)
