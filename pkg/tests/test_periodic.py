import numpy as np
import pytest

from microsdf import periodic as pe
from microsdf.errors import ConfigError, DomainError


def probes(n=500, scale=0.2, seed=0):
    return np.random.default_rng(seed).uniform(-scale, scale, size=(n, 3))


class TestSCFormula:
    def test_single_sine_term(self):
        f = pe.SCFormula(terms=((pe.TrigTerm("sin", 0),),), width=0.3)
        assert pe.sc_eval(f, np.array([np.pi / 2, 0, 0])) == pytest.approx(1.3)

    def test_gyroid_formula_width_at_origin(self):
        terms = tuple(
            (pe.TrigTerm("sin", i), pe.TrigTerm("cos", (i + 1) % 3)) for i in range(3)
        )
        f = pe.SCFormula(terms=terms, width=0.25)
        # every summand contains a vanishing sine at the origin
        assert pe.sc_eval(f, np.zeros(3)) == pytest.approx(0.25)

    def test_against_independent_term_evaluator(self):
        rng = np.random.default_rng(1)
        terms = []
        for _ in range(4):
            product = []
            for _ in range(rng.integers(1, 4)):
                product.append(
                    pe.TrigTerm(
                        func=rng.choice(["sin", "cos"]),
                        coord=int(rng.integers(0, 3)),
                        amplitude=float(rng.uniform(0.2, 2.0)),
                        frequency=float(rng.uniform(0.5, 5.0)),
                        phase=float(rng.uniform(0, 2 * np.pi)),
                        power=int(rng.integers(0, 3)),
                    )
                )
            terms.append(tuple(product))
        f = pe.SCFormula(terms=tuple(terms), width=0.1)

        def oracle(p):
            total = 0.0
            for product in terms:
                v = 1.0
                for t in product:
                    base = np.sin if t.func == "sin" else np.cos
                    v *= (t.amplitude * base(t.frequency * p[t.coord] + t.phase)) ** t.power
                total += v
            return total + 0.1

        for p in probes(50, scale=2.0, seed=2):
            assert pe.sc_eval(f, p) == pytest.approx(oracle(p), abs=1e-12)

    def test_counter_one_formula_eval_per_call(self):
        f = pe.sc_field(pe.SCFormula(terms=((pe.TrigTerm("sin", 0),),)))
        for _ in range(7):
            f(np.zeros(3))
        assert f.stats["formula_evals"] == 7

    def test_needs_at_least_one_term(self):
        with pytest.raises(ConfigError):
            pe.SCFormula(terms=())


class TestGyroidFamily:
    def test_gyroid1d_values(self):
        assert pe.gyroid1d(np.zeros(3), 100.0) == pytest.approx(0.0)
        eta = 100.0
        p = np.array([np.pi / (2 * eta), 0, 0])
        assert pe.gyroid1d(p, eta) == pytest.approx(1.0 / eta)

    def test_gyroid1d_direct_arithmetic(self):
        p = np.array([0.01, 0.02, 0.03])
        eta = 100.0
        expect = (np.sin(1.0) + np.sin(2.0) + np.sin(3.0)) / eta
        assert pe.gyroid1d(p, eta) == pytest.approx(expect, abs=1e-15)

    def test_gyroid1d_domain(self):
        with pytest.raises(DomainError):
            pe.gyroid1d(np.zeros(3), 0.0)

    def test_gyroid3d_origin_thickness_over_eta(self):
        assert pe.gyroid3d(np.zeros(3), 100.0, 7.0, 1.2) == pytest.approx(1.2 / 100.0)

    def test_gyroid5d_ties_to_gyroid3d(self):
        p = probes(200, scale=0.1, seed=3)
        a = pe.gyroid5d(p, 100.0, 7.0, 7.0, 7.0, 1.2)
        b = pe.gyroid3d(p, 100.0, 7.0, 1.2)
        assert np.allclose(a, b, atol=1e-14)

    def test_gyroid3d_direct_arithmetic(self):
        eta, a, t = 50.0, 3.0, 0.4
        k = 2 * np.pi / a
        p = np.array([0.011, -0.007, 0.019])
        x = p * eta
        expect = (
            np.sin(k * x[0]) * np.cos(k * x[1])
            + np.sin(k * x[1]) * np.cos(k * x[2])
            + np.sin(k * x[2]) * np.cos(k * x[0])
            + t
        ) / eta
        assert pe.gyroid3d(p, eta, a, t) == pytest.approx(expect, abs=1e-15)


class TestFibers:
    def test_phi_zero_branches_coincide(self):
        p = probes(300, scale=0.05, seed=4)
        eta = 100.0

        def u(x):
            s = (
                np.sin(x[..., 0]) * np.cos(x[..., 1])
                + np.sin(x[..., 1]) * np.cos(x[..., 2])
                + np.sin(x[..., 2]) * np.cos(x[..., 0])
            )
            return s**2

        x = p * eta
        splat = np.repeat(x[..., 1:2], 3, axis=-1)
        unrotated = (u(x) + u(splat)) / eta
        assert np.allclose(pe.fibers2d(p, eta, 0.0), unrotated, atol=1e-14)

    def test_two_pi_periodic_in_phi(self):
        p = probes(300, scale=0.05, seed=5)
        a = pe.fibers2d(p, 100.0, 0.7)
        b = pe.fibers2d(p, 100.0, 0.7 + 2 * np.pi)
        assert np.allclose(a, b, atol=1e-12)

    def test_rotation_composition_identity(self):
        # the rotated branch at phi+pi equals the phi branch of the
        # pre-rotated point: T_{phi+pi} = T_phi T_pi exactly
        phi = 0.7
        Ta = pe._rot_y(phi + np.pi)
        Tb = pe._rot_y(phi) @ pe._rot_y(np.pi)
        assert np.allclose(Ta, Tb, atol=1e-15)

    def test_direct_arithmetic_probe(self):
        eta, phi = 100.0, np.pi / 4
        p = np.array([0.013, 0.008, -0.004])
        x = p * eta
        R = pe._rot_y(phi)

        def u(x):
            return (
                np.sin(x[0]) * np.cos(x[1])
                + np.sin(x[1]) * np.cos(x[2])
                + np.sin(x[2]) * np.cos(x[0])
            ) ** 2

        splat = np.array([x[1], x[1], x[1]])
        expect = min(u(x) + u(splat), u(R @ x) + u(R @ splat)) / eta
        assert pe.fibers2d(p, eta, phi) == pytest.approx(expect, abs=1e-14)


class TestSpheres:
    def test_value_at_generated_center(self):
        eta, r = 30.0, 0.08
        c = pe.spheres2d_centers(np.array([3, -2, 5]))
        p = c / eta
        assert pe.spheres2d(p, eta, r) == pytest.approx(-r / eta, abs=1e-12)

    def test_deterministic(self):
        p = probes(300, scale=0.3, seed=6)
        assert np.array_equal(pe.spheres2d(p, 30.0, 0.08), pe.spheres2d(p, 30.0, 0.08))

    def test_brute_force_window_equivalence(self):
        # within the provable band (value < (1/2 - r)/eta) the 8-cell dual
        # window min equals a 5^3 enumeration
        eta, r = 30.0, 0.08
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(300):
            cell = rng.integers(-10, 10, size=3)
            c = pe.spheres2d_centers(cell)
            p = (c + rng.uniform(-0.4, 0.4, size=3)) / eta
            val = pe.spheres2d(p, eta, r)
            if val < (0.5 - r) / eta - 1e-12:
                y = p * eta
                base = np.floor(y).astype(np.int64)
                best = np.inf
                for off in np.ndindex(5, 5, 5):
                    q = base + np.asarray(off) - 2
                    cc = pe.spheres2d_centers(q)
                    best = min(best, np.linalg.norm(cc - y))
                assert val == pytest.approx((best - r) / eta, abs=1e-12)
                checked += 1
        assert checked > 200

    def test_non_smooth_flag(self):
        assert pe.microstructure("spheres2d").smooth is False


class TestPorous:
    def test_zero_matrices_give_zero(self):
        assert pe.porous28d(probes(10, seed=8), 30.0, np.zeros((3, 3, 3))).max() == 0.0

    def test_never_exceeds_eps_over_eta(self):
        T = pe.POROUS_GT_T
        v = pe.porous28d(probes(5000, scale=0.5, seed=9), 30.0, T)
        assert np.all(v <= pe.POROUS_EPS / 30.0 + 1e-18)

    def test_direct_evaluation_oracle(self):
        rng = np.random.default_rng(10)
        T = rng.uniform(-4, 7, size=(3, 3, 3))
        eta = 30.0
        for p in probes(30, scale=0.2, seed=11):
            args = [eta * T[m] @ p for m in range(3)]

            def gy(x):
                return (
                    np.sin(x[0]) * np.cos(x[1])
                    + np.sin(x[1]) * np.cos(x[2])
                    + np.sin(x[2]) * np.cos(x[0])
                ) ** 2

            def ss(x):
                return (
                    np.sin(x[0]) * np.sin(x[1])
                    + np.sin(x[1]) * np.sin(x[2])
                    + np.sin(x[2]) * np.sin(x[0])
                ) ** 2

            expect = min(pe.POROUS_EPS, gy(args[0]) + ss(args[1]) * gy(args[2])) / eta
            assert pe.porous28d(p, eta, T) == pytest.approx(expect, abs=1e-15)


class TestTPMS:
    def test_gyroid_at_origin_is_thickness(self):
        assert pe.tpms("gyroid", np.zeros(3), cell=2.0, thickness=0.45) == pytest.approx(0.45)

    def test_primitive_at_origin(self):
        assert pe.tpms("primitive", np.zeros(3), cell=2.0, thickness=0.1) == pytest.approx(3.1)

    def test_gyroid_matches_parameter_map(self):
        # tpms gyroid == gyroid3d at eta = 1 with a = cell, t = thickness
        p = probes(200, scale=2.0, seed=12)
        a = pe.tpms("gyroid", p, cell=3.0, thickness=0.2)
        b = pe.gyroid3d(p, 1.0, 3.0, 0.2)
        assert np.allclose(a, b, atol=1e-14)

    def test_unknown_name(self):
        with pytest.raises(ConfigError):
            pe.tpms("neovius", np.zeros(3))


class TestParticleLattice:
    def test_origin_width(self):
        assert pe.sc_particles(np.zeros(3), omega=3.0, width=0.7) == pytest.approx(0.7)

    def test_quarter_period_peak(self):
        w = 0.2
        omega = 4.0
        p = np.array([np.pi / (2 * omega), 0, 0])
        assert pe.sc_particles(p, omega, w) == pytest.approx(1.0 + w)

    def test_quartic_remainder_bounded(self):
        omega, w = 5.0, 0.1
        rng = np.random.default_rng(13)
        p = rng.uniform(-0.1 / omega, 0.1 / omega, size=(1000, 3))
        f = pe.sc_particles(p, omega, w)
        quad = pe.sc_particles_quadratic(p, omega, w)
        norm4 = np.sum(p * p, axis=-1) ** 2
        ratio = np.abs(f - quad) / np.maximum(norm4, 1e-300)
        # remainder is -(omega x)^4/3 per axis to leading order
        assert np.max(ratio) <= omega**4 / 2.5
        # the constant is stable: independent probe batches agree
        p2 = np.random.default_rng(14).uniform(-0.1 / omega, 0.1 / omega, size=(1000, 3))
        r2 = np.abs(pe.sc_particles(p2, omega, w) - pe.sc_particles_quadratic(p2, omega, w))
        r2 = r2 / np.maximum(np.sum(p2 * p2, axis=-1) ** 2, 1e-300)
        assert np.max(r2) == pytest.approx(np.max(ratio), rel=0.35)


class TestPeriodicityInvariant:
    def test_gyroid1d_period(self):
        eta = 100.0
        period = 2 * np.pi / eta
        p = probes(300, scale=0.3, seed=15)
        for axis in range(3):
            shift = np.zeros(3)
            shift[axis] = period
            assert np.allclose(pe.gyroid1d(p, eta), pe.gyroid1d(p + shift, eta), atol=1e-9)

    def test_gyroid3d_period(self):
        eta, a, t = 100.0, 7.0, 1.2
        period = a / eta
        p = probes(300, scale=0.3, seed=16)
        shift = np.array([period, 0, 0])
        assert np.allclose(
            pe.gyroid3d(p, eta, a, t), pe.gyroid3d(p + shift, eta, a, t), atol=1e-9
        )

    def test_fibers_period_at_zero_angle(self):
        # the layering term feeds the rotated splat Tphi(x1,x1,x1), whose
        # image is not a lattice vector at generic angles, so the analytic
        # period only exists at phi = 0 where it is 2*pi/eta on every axis
        eta = 100.0
        period = 2 * np.pi / eta
        p = probes(300, scale=0.2, seed=17)
        for axis in range(3):
            shift = np.zeros(3)
            shift[axis] = period
            a = pe.fibers2d(p, eta, 0.0)
            b = pe.fibers2d(p + shift, eta, 0.0)
            assert np.allclose(a, b, atol=1e-9)

    def test_porous_period_with_integer_structure(self):
        eta = 30.0
        T = np.ones((3, 3, 3))
        period = 2 * np.pi / eta
        p = probes(300, scale=0.2, seed=18)
        shift = np.array([period, 0, 0])
        assert np.allclose(
            pe.porous28d(p, eta, T), pe.porous28d(p + shift, eta, T), atol=1e-9
        )


class TestRegistry:
    def test_six_names(self):
        assert sorted(pe.MICROSTRUCTURES) == [
            "fibers2d",
            "gyroid1d",
            "gyroid3d",
            "gyroid5d",
            "porous28d",
            "spheres2d",
        ]

    def test_ground_truth_values(self):
        assert pe.microstructure("gyroid1d").ground_truth == (100.0,)
        assert pe.microstructure("gyroid3d").ground_truth == (100.0, 7.0, 1.2)
        assert pe.microstructure("gyroid5d").ground_truth == (100.0, 7.0, 10.0, 15.0, 1.2)
        assert pe.microstructure("fibers2d").ground_truth == (100.0, np.pi / 4)
        assert pe.microstructure("spheres2d").ground_truth == (30.0, 0.08)
        porous = pe.microstructure("porous28d")
        assert porous.ground_truth[0] == 30.0
        assert len(porous.ground_truth) == 28
        assert all(-4 <= v <= 7 for v in porous.ground_truth[1:])

    def test_build_matches_direct_call(self):
        m = pe.microstructure("gyroid3d")
        f = m.build(m.ground_truth)
        p = probes(100, scale=0.1, seed=19)
        assert np.allclose(f(p), pe.gyroid3d(p, 100.0, 7.0, 1.2), atol=1e-15)

    def test_smooth_flags(self):
        flags = {name: m.smooth for name, m in pe.MICROSTRUCTURES.items()}
        assert flags == {
            "gyroid1d": True,
            "gyroid3d": True,
            "gyroid5d": True,
            "fibers2d": True,
            "spheres2d": False,
            "porous28d": True,
        }

    def test_lipschitz_declarations_cover_empirical(self):
        from microsdf.fields import max_gradient_estimate

        for name in ["gyroid1d", "gyroid3d", "gyroid5d", "fibers2d", "porous28d"]:
            m = pe.microstructure(name)
            f = m.build(m.ground_truth)
            est = max_gradient_estimate(f, (-0.5,) * 3, (0.5,) * 3, samples=3000, eps=1e-7, seed=20)
            assert est <= f.lipschitz * 1.01, name

    def test_unknown_name(self):
        with pytest.raises(ConfigError):
            pe.microstructure("nope")
