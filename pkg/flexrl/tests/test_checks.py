from dataclasses import replace
from unittest import mock

import numpy as np
from django.test import SimpleTestCase, tag

from flexrl.checks import SUITES, conjugacy_suite, numeric_conjugate, run_suites
from flexrl.divergences import CATALOG


class CheckSuiteTest(SimpleTestCase):
    """Test the invariant suites"""

    def test_quick_suites_pass(self):
        results = run_suites(['generator', 'continuity', 'loss_convexity', 'equivalence', 'adaptive'], seed=0)
        failures = [f"{result.suite}: {result.case} ({result.error:g})" for result in results if not result.passed]
        self.assertEqual(failures, [])
        self.assertEqual({result.suite for result in results},
                         {'generator', 'continuity', 'loss_convexity', 'equivalence', 'adaptive'})

    def test_small_duality_and_perf_diff(self):
        results = run_suites(['duality', 'perf_diff'], seed=1, max_size=8)
        self.assertTrue(all(result.passed for result in results))
        reports = [result.report for result in results if result.report]
        self.assertTrue(reports)
        self.assertEqual(set(reports[0]), {'instance', 'divergence', 'alpha_g', 'primal', 'dual', 'gap', 'iterations'})

    def test_numeric_conjugate(self):
        self.assertAlmostEqual(numeric_conjugate(CATALOG['chi2'], 0.5), 0.625, places=8)
        self.assertAlmostEqual(numeric_conjugate(CATALOG['kl'], 1.0), np.e - 1.0, places=8)

    def test_wrong_conjugate_is_caught(self):
        kl = CATALOG['kl']
        broken = replace(kl, fn_conjugate=lambda e: np.expm1(e) + 0.01 * e ** 2)
        with mock.patch.dict(CATALOG, {'kl': broken}):
            results = conjugacy_suite(np.random.default_rng(0), 64)
        self.assertIn('kl', [result.case for result in results if not result.passed])

    def test_result_rows(self):
        result = run_suites(['generator'])[0]
        self.assertEqual(result.as_row()['passed'], 1)
        self.assertEqual(len(SUITES), 8)

    @tag('slow')
    def test_conjugacy_suite_passes(self):
        results = run_suites(['conjugacy'], seed=0)
        self.assertTrue(all(result.passed for result in results))
