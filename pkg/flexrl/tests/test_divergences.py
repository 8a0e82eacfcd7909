import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from flexrl.divergences import (
    CATALOG, FlexF, Interval, LossProfile, LpMode, as_flex, compose_flex, eval_g, eval_g_prime,
    eval_g_second, eval_gstar, eval_gstar_prime_inv, eval_gstar_second, get_divergence,
    parse_divergence, preset,
)
from flexrl.exceptions import (
    DomainError, InvalidCoefficient, InvalidThreshold, UnknownPreset,
)

bases = st.sampled_from(sorted(CATALOG))
coefficients = st.floats(min_value=0.2, max_value=5.0)
thresholds = st.floats(min_value=0.2, max_value=3.0)


def loss_grid(f, low=-1.0, high=1.0, n_points=201):
    top = min(high, f.e_domain.upper - 1e-3)
    return np.linspace(low, top, n_points)


class IntervalTest(SimpleTestCase):
    """Test interval membership and clipping"""

    def test_open_and_closed_endpoints(self):
        interval = Interval(0.0, 1.0, lower_closed=True)
        self.assertTrue(interval.contains(0.0))
        self.assertFalse(interval.contains(1.0))
        self.assertFalse(interval.interior(0.0))

    def test_require_names_the_offending_value(self):
        with self.assertRaisesRegex(DomainError, "zeta=-2.0"):
            Interval(0.0, math.inf).require(np.array([1.0, -2.0]), 'zeta')

    def test_clip_respects_open_bound(self):
        clipped = Interval(-math.inf, 0.5).clip(np.array([0.7]))
        self.assertLess(clipped[0], 0.5)
        self.assertEqual(Interval(-math.inf, 0.25, upper_closed=True).clip(0.3), 0.25)


class CatalogTest(SimpleTestCase):
    """Test the closed-form base generators"""

    def test_generators_are_normalized_at_one(self):
        for f in CATALOG.values():
            with self.subTest(f.name):
                self.assertLessEqual(abs(eval_gstar(f, 1.0)), 1e-12)
                self.assertLessEqual(abs(f.gstar_prime(1.0)), 1e-12)

    def test_conjugate_vanishes_at_zero_with_unit_slope(self):
        for f in CATALOG.values():
            with self.subTest(f.name):
                self.assertAlmostEqual(eval_g(f, 0.0), 0.0, places=12)
                self.assertAlmostEqual(eval_g_prime(f, 0.0), 1.0, places=12)

    def test_fenchel_young_equality_at_the_optimal_ratio(self):
        for f in CATALOG.values():
            e = np.array([-1.0, -0.3, 0.0, 0.1, 0.2])
            zeta = eval_gstar_prime_inv(f, e)
            with self.subTest(f.name):
                np.testing.assert_allclose(e * zeta - f.gstar(zeta), f.conjugate(e), atol=1e-12)

    def test_second_derivatives_match_finite_differences(self):
        h = 1e-5
        for f in CATALOG.values():
            zeta = np.array([0.5, 1.0, 2.0])
            numeric = (f.gstar_prime(zeta + h) - f.gstar_prime(zeta - h)) / (2 * h)
            with self.subTest(f.name):
                np.testing.assert_allclose(eval_gstar_second(f, zeta), numeric, rtol=1e-6)
                e = f.gstar_prime(zeta)
                np.testing.assert_allclose(eval_g_second(f, e), 1.0 / numeric, rtol=1e-6)

    def test_known_values(self):
        self.assertAlmostEqual(CATALOG['chi2'].conjugate(0.5), 0.625)
        self.assertAlmostEqual(CATALOG['kl'].conjugate(1.0), math.e - 1.0)
        self.assertAlmostEqual(CATALOG['reverse_kl'].gstar_prime_inv(0.5), 2.0)
        self.assertAlmostEqual(CATALOG['hellinger'].gstar_prime_inv(0.25), 4.0)

    def test_le_cam_conjugate_is_finite_at_its_closed_endpoint(self):
        le_cam = CATALOG['le_cam']
        self.assertAlmostEqual(le_cam.conjugate(0.25), 0.75)
        with self.assertRaises(DomainError):
            le_cam.gstar_prime_inv(0.25)
        with self.assertRaises(DomainError):
            le_cam.conjugate(0.3)

    def test_domains_are_enforced(self):
        with self.assertRaises(DomainError):
            CATALOG['kl'].gstar(-0.1)
        with self.assertRaises(DomainError):
            CATALOG['hellinger'].conjugate(0.5)
        with self.assertRaises(DomainError):
            CATALOG['reverse_kl'].gstar(0.0)

    def test_kl_gstar_is_defined_at_zero(self):
        self.assertEqual(CATALOG['kl'].gstar(0.0), 1.0)

    def test_scalar_in_scalar_out(self):
        self.assertIsInstance(CATALOG['chi2'].conjugate(0.1), float)
        self.assertEqual(CATALOG['chi2'].conjugate(np.zeros(3)).shape, (3,))

    def test_get_divergence(self):
        self.assertIs(get_divergence('Reverse-KL'), CATALOG['reverse_kl'])
        with self.assertRaises(UnknownPreset):
            get_divergence('tv')


class ComposeFlexTest(SimpleTestCase):
    """Test the two-branch composition"""

    @settings(deadline=None, max_examples=60)
    @given(bases, bases, coefficients, coefficients, thresholds)
    def test_value_and_slope_are_continuous_at_beta(self, lower, upper, alpha_minus, alpha_plus, beta):
        f = compose_flex(CATALOG[lower], CATALOG[upper], alpha_minus, alpha_plus, beta)
        self.assertLessEqual(abs(f.lower_gstar(beta) - f.upper_gstar(beta)), 1e-9)
        self.assertLessEqual(abs(f.lower_gstar_prime(beta) - f.upper_gstar_prime(beta)), 1e-9)

    @settings(deadline=None, max_examples=60)
    @given(bases, bases, coefficients, coefficients, thresholds)
    def test_composition_is_a_valid_generator(self, lower, upper, alpha_minus, alpha_plus, beta):
        f = compose_flex(CATALOG[lower], CATALOG[upper], alpha_minus, alpha_plus, beta)
        self.assertLessEqual(abs(f.gstar(1.0)), 1e-9)
        self.assertLessEqual(abs(f.gstar_prime(1.0)), 1e-9)
        self.assertLessEqual(abs(f.conjugate(0.0)), 1e-9)

    @settings(deadline=None, max_examples=40)
    @given(bases, bases, coefficients, coefficients, thresholds)
    def test_bellman_loss_is_nonnegative_and_convex(self, lower, upper, alpha_minus, alpha_plus, beta):
        f = compose_flex(CATALOG[lower], CATALOG[upper], alpha_minus, alpha_plus, beta)
        profile = LossProfile(f, LpMode.NEG_TD_ERROR)
        e = loss_grid(f)
        loss = profile.value(e)
        self.assertGreaterEqual(loss.min(), -1e-12)
        self.assertLessEqual(abs(profile.value(0.0)), 1e-12)
        second = loss[:-2] - 2 * loss[1:-1] + loss[2:]
        self.assertGreaterEqual(second.min(), -1e-9)

    def test_correction_side_follows_beta(self):
        chi2, kl = CATALOG['chi2'], CATALOG['kl']
        below = compose_flex(kl, chi2, 1.0, 1.0, 0.5)
        above = compose_flex(kl, chi2, 1.0, 1.0, 2.0)
        self.assertTrue(below.lower_corrected)
        self.assertFalse(above.lower_corrected)
        # the uncorrected branch keeps its base form
        self.assertAlmostEqual(below.gstar(3.0), chi2.gstar(3.0))
        self.assertAlmostEqual(above.gstar(0.25), kl.gstar(0.25))

    def test_branch_dispatch_for_ratios_and_errors(self):
        f = compose_flex(CATALOG['kl'], CATALOG['chi2'], 2.0, 3.0, 1.0)
        self.assertAlmostEqual(f.gstar(0.5), 2.0 * CATALOG['kl'].gstar(0.5))
        self.assertAlmostEqual(f.gstar(2.0), 3.0 * CATALOG['chi2'].gstar(2.0))
        self.assertAlmostEqual(f.gstar_prime_inv(-0.5), CATALOG['kl'].gstar_prime_inv(-0.25))
        self.assertAlmostEqual(f.gstar_prime_inv(0.6), CATALOG['chi2'].gstar_prime_inv(0.2))
        self.assertAlmostEqual(f.conjugate_second(0.6), 1.0 / 3.0)

    def test_trivial_composition_matches_the_base(self):
        e = np.linspace(-2.0, 0.2, 23)
        for f in CATALOG.values():
            with self.subTest(f.name):
                np.testing.assert_allclose(as_flex(f).conjugate(e), f.conjugate(e), atol=1e-14)

    def test_le_cam_upper_branch_bounds_the_error_domain(self):
        f = compose_flex(CATALOG['chi2'], CATALOG['le_cam'], 1.0, 2.0, 1.0)
        self.assertAlmostEqual(f.e_domain.upper, 0.5)
        self.assertTrue(f.e_domain.upper_closed)

    def test_rejects_bad_coefficients_and_thresholds(self):
        chi2, kl, le_cam = CATALOG['chi2'], CATALOG['kl'], CATALOG['le_cam']
        with self.assertRaises(InvalidCoefficient):
            compose_flex(chi2, chi2, 0.0, 1.0, 1.0)
        with self.assertRaises(InvalidCoefficient):
            compose_flex(chi2, chi2, 1.0, -2.0, 1.0)
        with self.assertRaises(InvalidThreshold):
            compose_flex(kl, chi2, 1.0, 1.0, 0.0)
        with self.assertRaises(InvalidThreshold):
            compose_flex(le_cam, chi2, 1.0, 1.0, -2.0)
        self.assertIsInstance(compose_flex(chi2, chi2, 1.0, 1.0, -0.5), FlexF)


class PresetTest(SimpleTestCase):
    """Test named presets and the textual divergence form"""

    def test_spellings(self):
        self.assertEqual(preset('soft-chi2').name, 'soft_chi2')
        self.assertEqual(preset('iql(0.9)').name, 'iql(0.9)')
        self.assertEqual(preset('iql').name, 'iql(0.7)')
        self.assertEqual(preset('porel-dice(0.25)').alpha_minus, 0.25)

    def test_iql_coefficients(self):
        f = preset('iql', tau=0.8)
        self.assertAlmostEqual(f.alpha_minus, 5.0)
        self.assertAlmostEqual(f.alpha_plus, 1.25)

    def test_unknown_and_invalid(self):
        with self.assertRaises(UnknownPreset):
            preset('cql')
        with self.assertRaises(UnknownPreset):
            preset('iql(high)')
        with self.assertRaises(InvalidCoefficient):
            preset('iql(1.5)')

    def test_parse_divergence(self):
        self.assertIs(parse_divergence('chi2'), CATALOG['chi2'])
        pair = parse_divergence('le_cam:chi2', 0.5, 2.0, 1.5)
        self.assertEqual((pair.g_minus.name, pair.g_plus.name), ('le_cam', 'chi2'))
        self.assertEqual((pair.alpha_minus, pair.alpha_plus, pair.beta), (0.5, 2.0, 1.5))
        self.assertEqual(parse_divergence('Relax-DICE').name, 'relax_dice')


class LossProfileTest(SimpleTestCase):
    """Test the per-sample Bellman loss"""

    def test_perspective_weighting(self):
        profile = LossProfile(CATALOG['chi2'], LpMode.NEG_TD_ERROR, alpha_g=0.5)
        self.assertAlmostEqual(profile.value(0.3), 0.09)
        self.assertAlmostEqual(profile.gradient(0.3), 0.6)
        self.assertAlmostEqual(profile.curvature(0.3), 2.0)

    def test_td_term_only_for_td_modes(self):
        e = 0.3
        folded = LossProfile(CATALOG['chi2'], LpMode.NEG_ESTIMATED_TD, alpha_g=0.5)
        plain = LossProfile(CATALOG['chi2'], LpMode.INIT_DIST, alpha_g=0.5)
        self.assertAlmostEqual(plain.value(e), 0.39)
        self.assertAlmostEqual(plain.value(e) - folded.value(e), e)
        self.assertTrue(LpMode.NEG_TD_ERROR.folds_td_error)
        self.assertFalse(LpMode.UNIFORM_VALUE.folds_td_error)

    def test_clipping_keeps_errors_in_the_domain(self):
        le_cam = CATALOG['le_cam']
        with self.assertRaises(DomainError):
            LossProfile(le_cam).value(0.3)
        self.assertAlmostEqual(LossProfile(le_cam, clip=True).value(0.3), 0.45)
        self.assertTrue(np.isfinite(LossProfile(le_cam, clip=True).gradient(0.3)))

    def test_alpha_g_must_be_positive(self):
        with self.assertRaises(InvalidCoefficient):
            LossProfile(CATALOG['kl'], alpha_g=0.0)
