import unittest

import numpy as np

import collar_geometry as cg
import differentials_family as df
from utils import ConfigurationError, DomainError, ModelValidationError

def _at(section, idx, theta):
    return complex(np.exp(1j * section.modes * theta) @ section.values[:, idx])

def _leading_e(tau):
    """Solution of -(sin²τ/2)e'' + e = sin⁴τ vanishing at both ends of the τ-range."""
    cot = 1 / np.tan(tau)
    basis = np.stack([cot, tau * cot - 1])
    ends = [0, -1]
    coef = np.linalg.solve(basis[:, ends].T, -0.5 * np.sin(tau[ends])**2)
    return 0.5 * np.sin(tau)**2 + coef @ basis

class PinchingPointTest(unittest.TestCase):

    def test_moduli(self):
        point = df.PinchingPoint((1e-6, 1e-8), n=3)
        self.assertEqual((point.m, point.n), (2, 3))
        self.assertAlmostEqual(point.u[0], 0.227395, places=6)
        self.assertAlmostEqual(point.u[1], 0.170553, places=6)
        self.assertAlmostEqual(point.u0, sum(point.u), places=14)

    def test_domain(self):
        with self.assertRaises(DomainError):
            df.PinchingPoint((0.0,))
        with self.assertRaises(DomainError):
            df.PinchingPoint((0.6,))
        with self.assertRaises(DomainError):
            df.PinchingPoint((1e-6,), s=(0.7,))
        with self.assertRaises(ConfigurationError):
            df.PinchingPoint((1e-6, 1e-6), n=1)

class MakeFamilyTest(unittest.TestCase):

    def test_leading_b(self):
        family = df.make_model_family(1, 1, 1e-6)
        b = family.b_true(0, 0)
        self.assertAlmostEqual(b.real / -7.2382e4, 1.0, places=4)
        self.assertAlmostEqual(b.imag, 0.0, places=8)

    def test_leading_rejects_tails(self):
        with self.assertRaises(ConfigurationError):
            df.make_model_family(1, 1, 1e-6, beltrami_tails={(1, 1): {1: 0.1}})
        with self.assertRaises(ConfigurationError):
            df.make_model_family(1, 1, 1e-6, profile="bogus")

    def test_tail_bound(self):
        bound = 10.0
        family = df.make_model_family(1, 1, 1e-6, profile="decorated", beltrami_tails={(1, 1): {1: bound / 0.5}})
        self.assertEqual(family.profile, "decorated")
        with self.assertRaises(ModelValidationError) as ctx:
            df.make_model_family(1, 1, 1e-6, profile="decorated", beltrami_tails={(1, 1): {1: 1.01 * bound / 0.5}})
        self.assertIn("beltrami", ctx.exception.sum_name)
        self.assertAlmostEqual(ctx.exception.bound, bound)

    def test_quadratic_tail_bound(self):
        with self.assertRaises(ModelValidationError):
            df.make_model_family(1, 1, 1e-6, profile="decorated", quadratic_tails={(1, 1): {-1: 25.0}})

    def test_offdiag_bounds(self):
        with self.assertRaises(ModelValidationError):
            df.make_model_family(1, 2, 1e-6, profile="decorated", offdiag_b={(2, 1): 11.0})
        with self.assertRaises(ModelValidationError):
            df.make_model_family(1, 2, 1e-6, profile="decorated", offdiag_beta={(2, 1): -11.0})
        with self.assertRaises(ConfigurationError):
            df.make_model_family(1, 2, 1e-6, profile="decorated", offdiag_b={(1, 1): 1.0})
        with self.assertRaises(ConfigurationError):
            df.make_model_family(1, 2, 1e-6, profile="decorated", offdiag_b={(3, 1): 1.0})

    def test_thick_blocks(self):
        with self.assertRaises(ConfigurationError):
            df.make_model_family(1, 2, 1e-6, thick_metric=[1.0, 2.0])
        with self.assertRaises(ConfigurationError):
            df.make_model_family(1, 2, 1e-6, thick_curvature=[-1.0])

    def test_zero_tails_match_leading(self):
        leading = df.make_model_family(1, 1, 1e-6)
        decorated = df.make_model_family(1, 1, 1e-6, profile="decorated")
        grid = leading.build_grids(64, 8)[0]
        np.testing.assert_array_equal(leading.beltrami_section(0, grid).values,
                                      decorated.beltrami_section(0, grid).values)

class EvaluationTest(unittest.TestCase):

    def setUp(self):
        self.t = 1e-6
        self.family = df.make_model_family(1, 2, self.t)
        self.chart = self.family.charts[0]

    def _z(self, tau, theta):
        return self.chart.r_of_tau(tau) * np.exp(1j * theta)

    def test_leading_quadratic(self):
        z = self._z(-1.0, 0.4)
        self.assertAlmostEqual(abs(df.quadratic_eval(self.family, 0, 0, z) / (-self.t / (np.pi * z**2)) - 1), 0, places=12)

    def test_thick_direction_vanishes(self):
        self.assertEqual(df.quadratic_eval(self.family, 1, 0, self._z(-1.0, 0.4)), 0)
        self.assertEqual(df.beltrami_eval(self.family, 1, 0, self._z(-1.0, 0.4)), 0)

    def test_outside_collar(self):
        with self.assertRaises(DomainError):
            df.quadratic_eval(self.family, 0, 0, 0.9)
        with self.assertRaises(DomainError):
            df.beltrami_eval(self.family, 0, 0, 0)

    def test_beltrami_modulus(self):
        b = abs(self.family.b_true(0, 0))
        values = [abs(df.beltrami_eval(self.family, 0, 0, self._z(-np.pi / 2, theta))) for theta in (0.0, 1.0, 2.0)]
        for value in values:
            self.assertAlmostEqual(value / b, 1.0, places=12)

    def test_duality(self):
        # A = h λ⁻¹φ̄ with h = ½u³/|t|² for the leading profile
        u = self.chart.u
        h = 0.5 * u**3 / self.t**2
        for tau, theta in ((-1.0, 0.3), (-2.5, 2.0)):
            z = self._z(tau, theta)
            dual = h * np.conj(df.quadratic_eval(self.family, 0, 0, z)) / cg.collar_density(self.chart, abs(z))
            self.assertAlmostEqual(abs(df.beltrami_eval(self.family, 0, 0, z) / dual - 1), 0, places=10)

    def test_conjugation(self):
        family = df.make_model_family(1, 1, self.t, profile="decorated", quadratic_tails={(1, 1): {1: 2.0, -1: 3.0}})
        z = self._z(-1.2, 0.8)
        self.assertAlmostEqual(abs(df.quadratic_eval(family, 0, 0, np.conj(z)) - np.conj(df.quadratic_eval(family, 0, 0, z))),
                               0, delta=1e-12 * abs(df.quadratic_eval(family, 0, 0, z)))

class SectionConsistencyTest(unittest.TestCase):

    def setUp(self):
        self.t = 1e-6 * np.exp(0.4j)
        self.family = df.make_model_family(1, 1, self.t, profile="decorated",
                                           beltrami_tails={(1, 1): {1: 2.0, -2: 1.5}},
                                           quadratic_tails={(1, 1): {2: 1.0, -1: 0.5}})
        self.grid = self.family.build_grids(64, 8)[0]
        self.chart = self.family.charts[0]

    def test_beltrami_section(self):
        section = self.family.beltrami_section(0, self.grid)
        for idx, theta in ((5, 0.3), (32, 1.7), (60, 4.0)):
            z = self.chart.r_of_tau(self.grid.tau[idx]) * np.exp(1j * theta)
            expected = df.beltrami_eval(self.family, 0, 0, z) / self.family.scale(0)
            self.assertAlmostEqual(abs(_at(section, idx, theta) - expected), 0, delta=1e-12 * (1 + abs(expected)))

    def test_quadratic_section(self):
        section = self.family.quadratic_section(0, self.grid)
        for idx, theta in ((5, 0.3), (32, 1.7), (60, 4.0)):
            z = self.chart.r_of_tau(self.grid.tau[idx]) * np.exp(1j * theta)
            density = cg.collar_density(self.chart, abs(z))
            expected = self.family.scale(0) * np.conj(df.quadratic_eval(self.family, 0, 0, z)) / density
            self.assertAlmostEqual(abs(_at(section, idx, theta) - expected), 0, delta=1e-10 * (1 + abs(expected)))

class PairFieldTest(unittest.TestCase):

    def setUp(self):
        self.family = df.make_model_family(1, 2, 1e-6, profile="decorated", offdiag_b={(2, 1): 0.5},
                                           beltrami_tails={(1, 1): {1: 1.0}})
        self.grids = self.family.build_grids(256, 8)
        self.s = self.grids[0].s

    def test_leading_diagonal(self):
        family = df.make_model_family(1, 1, 1e-6)
        f = df.f_pair(family, 0, 0, family.build_grids(256, 8))
        np.testing.assert_allclose(f.sections[0].mode(0), self.s**4, atol=1e-14)

    def test_hermitian(self):
        f01 = df.f_pair(self.family, 0, 1, self.grids)
        f10 = df.f_pair(self.family, 1, 0, self.grids)
        swapped = f10.conj()
        self.assertEqual((swapped.i, swapped.j), (0, 1))
        np.testing.assert_allclose(f01.sections[0].values, swapped.sections[0].values, atol=1e-14)

    def test_zero_direction(self):
        family = df.make_model_family(1, 2, 1e-6)
        f = df.f_pair(family, 0, 1, family.build_grids(64, 4))
        self.assertEqual(f.sections, {})
        self.assertEqual(f.integrate(), 0)

    def test_e_green_leading(self):
        family = df.make_model_family(1, 1, 1e-6)
        grid = family.build_grids(256, 8)[0]
        field = df.e_green(family, 0, 0, grid).sections[0]
        e = field.mode(0)
        np.testing.assert_allclose(e.real, _leading_e(grid.tau), atol=5e-6)
        self.assertEqual((e[0], e[-1]), (0, 0))
        u = family.u(0)
        center = np.argmin(np.abs(grid.tau + np.pi / 2))
        self.assertLess(abs(e[center].real - 0.5), 0.15 * u**3)
        self.assertGreater(abs(e[center].real - 0.5), 0.05 * u**3)
        self.assertLess(max(field.residuals.values()), 1e-10)

    def test_e_green_positive(self):
        e = df.e_green(self.family, 0, 0, self.grids).sections[0].mode(0)
        self.assertTrue(np.all(e[1:-1].real > 0))
        self.assertEqual((e[0], e[-1]), (0, 0))

    def test_e_green_hermitian(self):
        e01 = df.e_green(self.family, 0, 1, self.grids)
        e10 = df.e_green(self.family, 1, 0, self.grids).conj()
        np.testing.assert_allclose(e01.sections[0].values, e10.sections[0].values, atol=1e-12)

class CutoffTest(unittest.TestCase):

    def test_values(self):
        c, c1 = 0.5, 0.25
        self.assertEqual(float(df.cutoff_eta(np.log(c1) - 1, c, c1)), 1.0)
        self.assertEqual(float(df.cutoff_eta(np.log(c) + 1, c, c1)), 0.0)
        self.assertAlmostEqual(float(df.cutoff_eta(0.5 * (np.log(c) + np.log(c1)), c, c1)), 0.5, places=14)

    def test_monotone(self):
        x = np.linspace(-3, 0, 200)
        self.assertTrue(np.all(np.diff(df.cutoff_eta(x)) <= 0))

    def test_bounds(self):
        first, second = df.cutoff_bounds(0.5, 0.25)
        width = np.log(2)
        self.assertAlmostEqual(first, 1.875 / width, places=12)
        x = np.linspace(np.log(0.25), np.log(0.5), 20001)
        slope = np.abs(np.gradient(df.cutoff_eta(x), x))
        self.assertLessEqual(slope.max(), first * (1 + 1e-6))
        self.assertGreater(second, 0)

    def test_invalid(self):
        with self.assertRaises(ConfigurationError):
            df.cutoff_eta(0.0, 0.25, 0.5)

class ETildeTest(unittest.TestCase):

    def setUp(self):
        self.family = df.make_model_family(1, 2, 1e-6, profile="decorated", offdiag_b={(2, 1): 0.5})
        self.grid = self.family.build_grids(256, 8)[0]
        log_r = self.grid.log_r
        self.interior = (log_r <= np.log(0.25)) & (self.grid.chart.log_rho - log_r <= np.log(0.25))

    def test_interior_diagonal(self):
        et = df.e_tilde(self.family, 0, 0, self.grid).sections[0].mode(0)
        np.testing.assert_array_equal(et[self.interior], (0.5 * self.grid.s**2)[self.interior])
        self.assertAlmostEqual(abs(et[0]), 0, places=12)
        self.assertAlmostEqual(abs(et[-1]), 0, places=12)

    def test_interior_mixed(self):
        et = df.e_tilde(self.family, 0, 1, self.grid).sections[0].mode(0)
        expected = 0.5 * self.grid.s**2 * (-1) * 0.5 * self.family.u(0)
        np.testing.assert_allclose(et[self.interior], expected[self.interior], rtol=1e-14)

    def test_thick_pair_vanishes(self):
        self.assertEqual(df.e_tilde(self.family, 1, 1, self.grid).sections, {})

class ApproxResidualTest(unittest.TestCase):

    def test_leading_bounded(self):
        for t in (1e-6, 1e-12):
            family = df.make_model_family(1, 1, t)
            report = df.approx_residual(family, 0, 0, family.build_grids(256, 8))
            self.assertEqual(report.case, "diagonal")
            self.assertGreater(report.normalized, 0.005)
            self.assertLess(report.normalized, 0.05)

    def test_interior_exact(self):
        family = df.make_model_family(1, 1, 1e-6)
        grid = family.build_grids(256, 8)[0]
        e = df.e_green(family, 0, 0, grid).sections[0]
        et = df.e_tilde(family, 0, 0, grid).sections[0]
        log_r = grid.log_r
        interior = (log_r <= np.log(0.25)) & (grid.chart.log_rho - log_r <= np.log(0.25))
        # in the flat band ẽ = ½sin²τ, so e - ẽ is the homogeneous part of e
        expected = _leading_e(grid.tau) - 0.5 * grid.s**2
        np.testing.assert_allclose((e.mode(0) - et.mode(0)).real[interior], expected[interior], atol=5e-6)
        self.assertLess(np.max(np.abs(expected[interior])), 0.2 * family.u(0)**2)

    def test_cases(self):
        family = df.make_model_family(2, 3, 1e-6, profile="decorated", offdiag_b={(2, 1): 0.5, (3, 1): 0.5})
        grids = family.build_grids(128, 8)
        self.assertEqual(df.approx_residual(family, 0, 1, grids).case, "collar")
        self.assertEqual(df.approx_residual(family, 0, 2, grids).case, "mixed")
        with self.assertRaises(ConfigurationError):
            df.approx_residual(family, 2, 2, grids)

class DualityPairingTest(unittest.TestCase):

    def test_leading(self):
        family = df.make_model_family(1, 2, 1e-6)
        grids = family.build_grids(256, 8)
        self.assertAlmostEqual(abs(df.wp_duality_pairing(family, 0, 0, grids)), 1.0, delta=1e-2)
        self.assertEqual(df.wp_duality_pairing(family, 1, 0, grids), 0)

    def test_bilinear(self):
        family = df.make_model_family(1, 1, 1e-6)
        grid = family.build_grids(64, 8)[0]
        mu = family.beltrami_section(0, grid)
        psi = family.quadratic_section(0, grid)
        self.assertAlmostEqual(abs(df.pairing(2 * mu, psi) - 2 * df.pairing(mu, psi)), 0, places=12)
        self.assertEqual(df.pairing(0 * mu, psi), 0)

if __name__ == '__main__':
    unittest.main()
