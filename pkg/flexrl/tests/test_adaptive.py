import math
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings, strategies as st

from flexrl import adaptive
from flexrl.divergences import CATALOG, compose_flex
from flexrl.exceptions import DegenerateVector


def pinned_behavior(n_samples, decay=0.0):
    """pi_b is 1 on the first sample and 0 on the rest."""
    state = adaptive.initial_adaptive_state(1, 2, ema_decay=decay)
    state = replace(state, bc_logits=np.array([[0.0, -1000.0]]))
    actions = np.ones(n_samples, dtype=int)
    actions[0] = 0
    return state, np.zeros(n_samples, dtype=int), actions


class AlphaEstimateTest(SimpleTestCase):
    """Test the cosine heuristic for the branch coefficients"""

    def test_cosine_of_one_half(self):
        state, states, actions = pinned_behavior(4)
        estimate = adaptive.estimate_alphas(state, states, actions, np.zeros(4))
        self.assertAlmostEqual(estimate.ema_cos, 0.5, places=12)
        self.assertAlmostEqual(estimate.alpha_plus, 2.0, places=12)
        self.assertAlmostEqual(estimate.alpha_minus, 2.0, places=12)

    def test_small_cosine_is_clamped(self):
        state, states, actions = pinned_behavior(100)
        estimate = adaptive.estimate_alphas(state, states, actions, np.zeros(100))
        self.assertAlmostEqual(estimate.ema_cos, 0.1, places=12)
        self.assertAlmostEqual(estimate.alpha_plus, 1.0 / 0.3, places=12)
        self.assertAlmostEqual(estimate.alpha_minus, 1.0 / 0.7, places=12)

    def test_smoothing(self):
        state, states, actions = pinned_behavior(4, decay=0.9)
        estimate = adaptive.estimate_alphas(replace(state, ema_cos=0.4), states, actions, np.zeros(4))
        self.assertAlmostEqual(estimate.ema_cos, 0.9 * 0.4 + 0.1 * 0.5)

    def test_zero_behavior_vector_is_skipped(self):
        state, states, _ = pinned_behavior(4)
        estimate = adaptive.estimate_alphas(state, states, np.ones(4, dtype=int), np.zeros(4))
        self.assertTrue(estimate.degenerate)
        self.assertEqual((estimate.alpha_plus, estimate.ema_cos), (state.alpha_plus, state.ema_cos))
        with self.assertRaises(DegenerateVector):
            adaptive.cosine_similarity(np.zeros(3), np.ones(3))

    def test_clamp_cosine(self):
        self.assertEqual(adaptive.clamp_cosine(0.1, 0.3), 0.3)
        self.assertEqual(adaptive.clamp_cosine(0.9, 0.3), 0.7)
        self.assertEqual(adaptive.clamp_cosine(0.5, 0.3), 0.5)


class BetaEstimateTest(SimpleTestCase):
    """Test the threshold estimate from the smoothed TD error"""

    def setUp(self):
        self.state = adaptive.initial_adaptive_state(1, 1, ema_decay=0.0)
        chi2 = CATALOG['chi2']
        self.chi2 = compose_flex(chi2, chi2, 1.0, 1.0, 1.0)

    def test_chi2_threshold(self):
        self.assertAlmostEqual(adaptive.estimate_beta(self.state, self.chi2, np.zeros(8)).beta, 1.0, places=12)
        self.assertAlmostEqual(adaptive.estimate_beta(self.state, self.chi2, np.full(8, 0.1)).beta, 1.1, places=12)

    def test_mean_error_is_clipped(self):
        estimate = adaptive.estimate_beta(self.state, self.chi2, np.full(8, 0.3))
        self.assertAlmostEqual(estimate.ema_e, 0.15, places=12)
        self.assertAlmostEqual(estimate.beta, 1.15, places=12)
        low = adaptive.estimate_beta(self.state, self.chi2, np.full(8, -1.0))
        self.assertAlmostEqual(low.beta, 0.8, places=12)

    def test_kl_falls_back_to_the_upper_branch(self):
        kl = CATALOG['kl']
        flex = compose_flex(kl, kl, 1.0, 1.0, 1.0)
        state = replace(self.state, alpha_plus=2.0, alpha_minus=2.0)
        estimate = adaptive.estimate_beta(state, flex, np.full(4, 0.1))
        self.assertAlmostEqual(estimate.beta, math.exp(0.05), places=12)

    def test_empty_batch_leaves_the_state(self):
        self.assertIs(adaptive.estimate_beta(self.state, self.chi2, np.empty(0)), self.state)

    def test_recompose(self):
        state = replace(self.state, alpha_plus=2.5, alpha_minus=1.5, beta=1.2)
        flex = adaptive.recompose(state, CATALOG['kl'], CATALOG['chi2'])
        self.assertEqual((flex.alpha_minus, flex.alpha_plus, flex.beta), (1.5, 2.5, 1.2))


class BehaviorCloningTest(SimpleTestCase):
    """Test the behavior cloning reference policy"""

    def test_update_raises_the_likelihood_of_seen_actions(self):
        state = adaptive.initial_adaptive_state(2, 3)
        updated = adaptive.bc_update(state, [0, 0, 1], [2, 2, 0])
        policy = updated.behavior_policy()
        self.assertGreater(policy[0, 2], 1 / 3)
        self.assertGreater(policy[1, 0], 1 / 3)
        np.testing.assert_allclose(policy.sum(axis=1), 1.0)

    def test_empty_batch(self):
        state = adaptive.initial_adaptive_state(2, 3)
        self.assertIs(adaptive.bc_update(state, [], []), state)


class EmaTest(SimpleTestCase):
    """Test exponential smoothing"""

    @settings(deadline=None, max_examples=100)
    @given(
        st.floats(-10, 10), st.floats(-10, 10), st.floats(0.0, 0.999), st.integers(0, 60),
    )
    def test_closed_form(self, start, observation, decay, steps):
        value = start
        for _ in range(steps):
            value = adaptive.ema(value, observation, decay)
        expected = observation + (start - observation) * decay ** steps
        self.assertLessEqual(abs(value - expected), 1e-12 * max(1.0, abs(start), abs(observation)) * (steps + 1))
