import numpy as np
import pytest

from microsdf import recon as rc
from microsdf import tracer as tr
from microsdf.errors import ContractError


def naive_dft(x):
    """O(N^2) reference DFT."""
    x = np.asarray(x, dtype=complex)
    n = x.size
    k = np.arange(n)
    M = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return M @ x


def naive_dft2(img):
    img = np.asarray(img, dtype=complex)
    rows = np.stack([naive_dft(r) for r in img])
    return np.stack([naive_dft(c) for c in rows.T]).T


class TestSamplePoints:
    def test_zero_sigma_exact_lattice(self):
        s = rc.sample_points(dims=(2, 3, 3), spacing=0.1, sigma=0.0, rotation=np.eye(3))
        assert s.points.shape == (18, 3)
        xs = np.unique(np.round(s.points[:, 0], 12))
        assert np.allclose(xs, [-0.05, 0.05])

    def test_identity_rotation_single_slice(self):
        s = rc.sample_points(dims=(1, 3, 3), spacing=0.2, sigma=0.0, rotation=np.eye(3))
        assert s.points.shape == (9, 3)
        assert np.allclose(s.points[:, 0], 0.0)  # one slice at x = 0
        assert np.allclose(
            sorted(np.unique(np.round(s.points[:, 1], 12))), [-0.2, 0.0, 0.2]
        )

    def test_jitter_std_matches_sigma(self):
        sigma = 5e-3
        s = rc.sample_points(dims=(10, 32, 32), sigma=sigma, seed=3)
        base = rc.sample_points(dims=(10, 32, 32), sigma=0.0)
        noise = s.points - base.points
        assert np.std(noise) == pytest.approx(sigma, rel=0.05)

    def test_base_points_inside_unit_sphere(self):
        s = rc.sample_points(sigma=0.0)
        assert np.max(np.linalg.norm(s.points, axis=-1)) <= 1.0 + 1e-12

    def test_count_invariant(self):
        s = rc.sample_points(dims=(8, 32, 32))
        assert s.points.shape[0] == 8 * 32 * 32

    def test_deterministic(self):
        a = rc.sample_points(seed=5)
        b = rc.sample_points(seed=5)
        assert np.array_equal(a.points, b.points)


class TestLoss3D:
    def test_floor_on_identical_inputs(self):
        v = np.random.default_rng(0).normal(size=64)
        assert rc.loss_ft_3d(v, v) == pytest.approx(np.log(rc.LOSS_EPS))

    def test_scaling_doubles_amplitudes_not_phases(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=32)
        fa = naive_dft(v)
        fb = naive_dft(2.0 * v)
        amp = np.abs(fa) - np.abs(fb)  # = -|fa|
        pha = np.angle(np.exp(1j * (np.angle(fa) - np.angle(fb))))
        assert np.allclose(np.abs(pha), 0.0, atol=1e-12)
        expect = np.log(np.sum(amp**2) / (2 * 32) + rc.LOSS_EPS)
        assert rc.loss_ft_3d(v, 2.0 * v) == pytest.approx(expect, abs=1e-9)

    def test_matches_naive_dft_oracle(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=32)
        b = rng.normal(size=32)
        fa, fb = naive_dft(a), naive_dft(b)
        amp = np.abs(fa) - np.abs(fb)
        pha = np.angle(np.exp(1j * (np.angle(fa) - np.angle(fb))))
        expect = np.log(np.sum(amp**2 + pha**2) / (2 * 32) + rc.LOSS_EPS)
        assert rc.loss_ft_3d(a, b) == pytest.approx(expect, abs=1e-9)

    def test_gt_beats_perturbed_for_gyroid(self):
        samples = rc.sample_points()
        target = rc.make_sdf_target("gyroid1d", samples=samples)
        import microsdf.periodic as pe

        m = pe.microstructure("gyroid1d")
        at_gt = rc.loss_ft_3d(m.build((100.0,))(samples.points), target.values)
        perturbed = rc.loss_ft_3d(m.build((110.0,))(samples.points), target.values)
        assert at_gt < perturbed

    def test_phase_wrap_no_two_pi_penalty(self):
        assert np.abs(rc._wrap_phase(np.pi * 1.5)) == pytest.approx(np.pi * 0.5)
        assert rc._wrap_phase(0.1) == pytest.approx(0.1)

    def test_contract_errors(self):
        with pytest.raises(ContractError):
            rc.loss_ft_3d(np.zeros(4), np.zeros(5))


class TestLoss2D:
    def test_floor_on_identical_images(self):
        img = np.random.default_rng(3).uniform(size=(8, 8, 3))
        assert rc.loss_ft_2d(img, img) == pytest.approx(np.log(rc.LOSS_EPS))

    def test_translation_invariance(self):
        img = np.random.default_rng(4).uniform(size=(16, 16, 3))
        rolled = np.roll(np.roll(img, 5, axis=0), 3, axis=1)
        assert rc.loss_ft_2d(img, rolled) == pytest.approx(np.log(rc.LOSS_EPS), abs=1e-9)

    def test_matches_naive_2d_dft_oracle(self):
        rng = np.random.default_rng(5)
        a = rng.uniform(size=(8, 4))
        b = rng.uniform(size=(8, 4))
        fa, fb = np.abs(naive_dft2(a)), np.abs(naive_dft2(b))
        expect = np.log(np.sum((fa - fb) ** 2) / 32 + rc.LOSS_EPS)
        assert rc.loss_ft_2d(a, b) == pytest.approx(expect, abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            rc.loss_ft_2d(np.zeros((4, 4)), np.zeros((5, 4)))


class TestFitPipeline:
    def test_self_target_floor_at_gt(self):
        samples = rc.sample_points(dims=(4, 16, 16))
        target = rc.make_sdf_target("gyroid3d", samples=samples)
        import microsdf.periodic as pe

        m = pe.microstructure("gyroid3d")
        loss = rc.loss_ft_3d(m.build(m.ground_truth)(samples.points), target.values)
        assert loss == pytest.approx(np.log(rc.LOSS_EPS))

    def test_smoothness_gate_unsupported_report(self):
        samples = rc.sample_points(dims=(2, 8, 8))
        target = rc.make_sdf_target("spheres2d", samples=samples)
        cfg = rc.OptimizerConfig(kind="basin_hopping", local_method="bfgs", budget=100)
        rep = rc.fit_parameters("spheres2d", target, cfg)
        assert rep.status == "unsupported"
        assert rep.phi_hat is None
        assert "non-smooth" in rep.message

    def test_gate_allows_smooth_fields(self):
        samples = rc.sample_points(dims=(2, 8, 8))
        target = rc.make_sdf_target("gyroid1d", samples=samples)
        cfg = rc.OptimizerConfig(kind="basin_hopping", local_method="bfgs", budget=300)
        rep = rc.fit_parameters("gyroid1d", target, cfg)
        assert rep.status in ("ok", "budget_exhausted")
        assert rep.loss_trace

    def test_derivative_free_allowed_on_non_smooth(self):
        samples = rc.sample_points(dims=(2, 8, 8))
        target = rc.make_sdf_target("spheres2d", samples=samples)
        cfg = rc.OptimizerConfig(kind="powell", budget=300)
        rep = rc.fit_parameters("spheres2d", target, cfg)
        assert rep.status in ("ok", "budget_exhausted")
        assert rep.phi_hat is not None

    def test_powell_stagnates_gracefully_from_far_start(self):
        # the non-smooth spheres field from a far start may never reach the
        # optimum; the contract is best-found, not success
        samples = rc.sample_points(dims=(4, 16, 16))
        target = rc.make_sdf_target("spheres2d", samples=samples)
        cfg = rc.OptimizerConfig(kind="powell", budget=800)
        rep = rc.fit_parameters("spheres2d", target, cfg, ground_truth=(30.0, 0.08))
        assert rep.phi_hat is not None
        space = rc.microstructure_space("spheres2d")
        assert space.contains(rep.phi_hat)

    def test_deterministic_reports(self):
        samples = rc.sample_points(dims=(2, 12, 12))
        target = rc.make_sdf_target("gyroid1d", samples=samples)
        cfg = rc.OptimizerConfig(kind="cma_es", budget=400, seed=9)
        a = rc.fit_parameters("gyroid1d", target, cfg)
        b = rc.fit_parameters("gyroid1d", target, cfg)
        assert np.array_equal(a.phi_hat, b.phi_hat)
        assert a.loss_trace == b.loss_trace
        assert a.evals == b.evals

    def test_fit_rejects_valueless_target(self):
        samples = rc.sample_points(dims=(2, 8, 8))
        with pytest.raises(ContractError):
            rc.fit_parameters("gyroid1d", samples, rc.OptimizerConfig(budget=10))


class TestAnalysisBySynthesis:
    def test_self_target_floor_at_iteration_zero(self):
        cam = rc.default_abs_camera(24, 24)
        target, cam = rc.make_image_target("gyroid1d", camera=cam)
        img, _ = rc.render_microstructure("gyroid1d", (100.0,), cam)
        assert rc.loss_ft_2d(img, target) == pytest.approx(np.log(rc.LOSS_EPS))

    def test_unsupported_combination(self):
        cam = rc.default_abs_camera(16, 16)
        target, cam = rc.make_image_target("spheres2d", camera=cam)
        cfg = rc.OptimizerConfig(kind="basin_hopping", local_method="bfgs", budget=30)
        rep = rc.analysis_by_synthesis("spheres2d", target, cam, cfg)
        assert rep.status == "unsupported"

    def test_porous_abs_graceful_completion(self):
        cam = rc.default_abs_camera(12, 12)
        target, cam = rc.make_image_target("porous28d", camera=cam, max_steps=64)
        cfg = rc.OptimizerConfig(kind="powell", budget=12)
        import microsdf.periodic as pe

        gt = pe.microstructure("porous28d").ground_truth
        rep = rc.analysis_by_synthesis(
            "porous28d", target, cam, cfg, ground_truth=gt, max_steps=64
        )
        assert rep.status in ("ok", "budget_exhausted")
        assert rep.evals <= 12

    def test_cma_synthesis_recovers_noise_scale(self):
        # render-in-the-loop fit: the small-population synthesis regime
        # recovers the density parameter from the fixed single view
        cam = rc.default_abs_camera(48, 48)
        target, cam = rc.make_image_target("gyroid1d", camera=cam)
        cfg = rc.OptimizerConfig(kind="cma_es", budget=600, seed=0, f_target=-10.0)
        rep = rc.analysis_by_synthesis("gyroid1d", target, cam, cfg,
                                       ground_truth=(100.0,))
        assert abs(rep.phi_hat[0] - 100.0) <= 0.1

    def test_render_deterministic(self):
        cam = rc.default_abs_camera(16, 16)
        a, _ = rc.render_microstructure("gyroid3d", (100.0, 7.0, 1.2), cam)
        b, _ = rc.render_microstructure("gyroid3d", (100.0, 7.0, 1.2), cam)
        assert np.array_equal(a, b)


class TestValidationErrorIntegration:
    def test_attached_by_pipeline(self):
        samples = rc.sample_points(dims=(2, 12, 12))
        target = rc.make_sdf_target("gyroid1d", samples=samples)
        cfg = rc.OptimizerConfig(kind="cma_es", budget=300, seed=1)
        rep = rc.fit_parameters("gyroid1d", target, cfg, ground_truth=(100.0,))
        assert rep.val_error is not None
        assert 0.0 <= rep.val_error <= 1.0
