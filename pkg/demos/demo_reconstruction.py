"""
Recovering procedural parameters
================================

Direct fitting compares DFT amplitude+phase spectra of SDF samples;
analysis-by-synthesis renders candidates and compares image spectra.
Both run on derivative-free optimizers, so non-smooth fields (hash-grid
spheres) fit exactly like smooth ones.
"""

import numpy as np

import microsdf as ms
from microsdf import recon as rc

# --- the sampling geometry: rotated, jittered slices of a ball -------------
samples = rc.sample_points(dims=(8, 32, 32), sigma=1e-3, seed=0)
print("sample points:", samples.points.shape)

# --- direct SDF fit of the noise scale --------------------------------------
target = rc.make_sdf_target("gyroid1d", samples=samples)
cfg = rc.OptimizerConfig(kind="cma_es", budget=20_000, seed=0, f_target=-12.0)
rep = rc.fit_parameters("gyroid1d", target, cfg, ground_truth=(100.0,))
print(f"gyroid1d: eta {rep.phi_hat[0]:.4f} (truth 100) in {rep.evals} evals, "
      f"val error {rep.val_error:.2e}")

# --- a non-smooth field: flooring kills gradients, sampling still works ------
target = rc.make_sdf_target("spheres2d", samples=samples)
rep = rc.fit_parameters(
    "spheres2d", target,
    rc.OptimizerConfig(kind="cma_es", budget=50_000, seed=0, f_target=-12.0),
    ground_truth=(30.0, 0.08),
)
print(f"spheres2d: eta {rep.phi_hat[0]:.3f} r {rep.phi_hat[1]:.4f} "
      f"(truth 30, 0.08), {rep.evals} evals")

# gradient-dependent configurations are refused on non-smooth fields
gate = rc.fit_parameters(
    "spheres2d", target,
    rc.OptimizerConfig(kind="basin_hopping", local_method="bfgs", budget=100),
)
print("gradient config on spheres2d ->", gate.status)

# --- basin hopping digs out the wall thickness -------------------------------
target = rc.make_sdf_target("gyroid3d", samples=samples)
rep = rc.fit_parameters(
    "gyroid3d", target,
    rc.OptimizerConfig(kind="basin_hopping", budget=50_000, seed=0, f_target=-12.0,
                       step_fraction=0.5, uniform_hop_prob=0.2),
    ground_truth=(100.0, 7.0, 1.2),
)
print(f"gyroid3d: recovered {np.round(rep.phi_hat, 3)} (truth 100, 7, 1.2)")

# --- analysis by synthesis: fit through the renderer --------------------------
cam = rc.default_abs_camera()
image_target, cam = rc.make_image_target("gyroid1d", camera=cam)
rep = rc.analysis_by_synthesis(
    "gyroid1d", image_target, cam,
    rc.OptimizerConfig(kind="cma_es", budget=600, seed=0, f_target=-10.0),
    ground_truth=(100.0,),
)
print(f"gyroid1d by synthesis: eta {rep.phi_hat[0]:.3f} after {rep.evals} renders")

# --- the 28-D porous problem defeats everything gracefully --------------------
target = rc.make_sdf_target("porous28d", samples=samples)
gt = ms.microstructure("porous28d").ground_truth
rep = rc.fit_parameters("porous28d", target,
                        rc.OptimizerConfig(kind="cma_es", budget=2000, seed=0),
                        ground_truth=gt)
print(f"porous28d: completed {rep.evals} evals, val error {rep.val_error:.2f} "
      f"(no recovery expected)")
