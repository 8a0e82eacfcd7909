import math

import numpy as np
from django.test import SimpleTestCase

from flexrl.divergences import CATALOG, preset
from flexrl.equivalence import ReferenceLoss, matched_pairs, reference_loss, verify_equivalence
from flexrl.exceptions import InvalidCoefficient, UnknownPreset


class ReferenceLossTest(SimpleTestCase):
    """Test the closed-form reference losses"""

    def test_values(self):
        self.assertAlmostEqual(reference_loss(ReferenceLoss('xql'), 1.0), math.e - 2.0)
        iql = ReferenceLoss('iql', 0.7)
        np.testing.assert_allclose(reference_loss(iql, np.array([2.0, -2.0])), [1.4, 0.6])
        self.assertEqual(reference_loss(ReferenceLoss('mse'), -3.0), 4.5)
        self.assertEqual(str(iql), 'iql(0.7)')

    def test_validation(self):
        with self.assertRaises(UnknownPreset):
            ReferenceLoss('huber')
        with self.assertRaises(InvalidCoefficient):
            ReferenceLoss('iql')
        with self.assertRaises(InvalidCoefficient):
            ReferenceLoss('iql', 1.0)


class EquivalenceTest(SimpleTestCase):
    """Test that the named compositions reproduce their reference losses"""

    def test_matched_pairs_agree(self):
        pairs = matched_pairs()
        self.assertEqual(len(pairs), 7)
        for ref, f, grid in pairs:
            with self.subTest(reference=str(ref)):
                self.assertLessEqual(verify_equivalence(ref, f, grid), 1e-10)

    def test_mismatched_pairs_differ(self):
        self.assertGreater(verify_equivalence(ReferenceLoss('xql'), CATALOG['chi2']), 0.1)
        self.assertGreater(verify_equivalence(ReferenceLoss('iql', 0.9), preset('iql', tau=0.7), (-3.0, 3.0)), 0.1)
