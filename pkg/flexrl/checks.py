"""
Invariant suites run by ``manage.py check_invariants``.

Each suite takes a seeded generator and a size bound and returns a list of
CheckResult rows; a suite passes when every row passes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from . import adaptive as adaptive_params
from .divergences import CATALOG, LossProfile, LpMode, compose_flex
from .equivalence import matched_pairs, reference_loss, verify_equivalence
from .exceptions import FlexRLError
from .lp_oracle import duality_gap_report, occupancy_residual
from .mdp import (
    TabularPolicy, exact_occupancy, perf_diff_check, policy_value, random_mdp,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    suite: str
    case: str
    passed: bool
    error: float
    tolerance: float
    detail: str = ''
    report: dict = field(default=None, compare=False, repr=False)

    def as_row(self):
        return {'suite': self.suite, 'case': self.case, 'passed': int(self.passed),
                'error': self.error, 'tolerance': self.tolerance, 'detail': self.detail}


RESULT_COLUMNS = ('suite', 'case', 'passed', 'error', 'tolerance', 'detail')


def _result(suite, case, error, tolerance, detail='', report=None):
    error = float(error)
    return CheckResult(suite, case, bool(np.isfinite(error) and error <= tolerance),
                       error, tolerance, detail, report)


def random_flex(rng):
    """A composition of two random catalog bases with random coefficients and threshold."""
    names = sorted(CATALOG)
    g_minus, g_plus = (CATALOG[names[i]] for i in rng.integers(0, len(names), size=2))
    alpha_minus, alpha_plus = rng.uniform(0.2, 5.0, size=2)
    beta = rng.uniform(0.2, 3.0)
    return compose_flex(g_minus, g_plus, alpha_minus, alpha_plus, beta)


def _divergences(rng, n_random=20):
    return list(CATALOG.values()) + [random_flex(rng) for _ in range(n_random)]


def _zeta_window(f):
    domain = f.zeta_domain
    low = domain.lower if np.isfinite(domain.lower) else -50.0
    return low, 50.0


def numeric_conjugate(f, e, n_grid=4001):
    """sup_zeta e zeta - g*(zeta): dense grid, then bounded Brent around the best cell."""
    low, high = _zeta_window(f)
    grid = np.linspace(low, high, n_grid)[1:]
    values = e * grid - f.gstar(grid)
    best = int(np.argmax(values))
    left, right = grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)]
    result = optimize.minimize_scalar(
        lambda z: -(e * z - f.gstar(z)), bounds=(left, right), method='bounded',
        options={'xatol': 1e-13},
    )
    return max(-float(result.fun), float(values[best]))


def _e_grid(f, n_points=100):
    """TD errors whose maximizing ratio lies well inside the search window."""
    lower = f.zeta_domain.lower
    start = lower + 0.05 if np.isfinite(lower) else -5.0
    return f.gstar_prime(np.linspace(start, 10.0, n_points))


def generator_suite(rng, max_size):
    results = []
    for f in CATALOG.values():
        results.append(_result('generator', f"{f.name} g*(1)", abs(f.gstar(1.0)), 1e-12))
        results.append(_result('generator', f"{f.name} g*'(1)", abs(f.gstar_prime(1.0)), 1e-12))
        results.append(_result('generator', f"{f.name} g(0)", abs(f.conjugate(0.0)), 1e-12))
        e = _e_grid(f)
        round_trip = np.max(np.abs(f.gstar_prime(f.gstar_prime_inv(e)) - e) / np.maximum(1.0, np.abs(e)))
        results.append(_result('generator', f"{f.name} inverse", round_trip, 1e-10))
    return results


def conjugacy_suite(rng, max_size):
    results = []
    for f in _divergences(rng):
        e = _e_grid(f)
        closed = f.conjugate(e)
        numeric = np.array([numeric_conjugate(f, value) for value in e])
        results.append(_result('conjugacy', f.name, np.max(np.abs(closed - numeric)), 1e-6))
    return results


def continuity_suite(rng, max_size, draws=1000):
    worst_value = worst_slope = 0.0
    worst_case = ''
    for _ in range(draws):
        f = random_flex(rng)
        value_gap = abs(f.lower_gstar(f.beta) - f.upper_gstar(f.beta))
        slope_gap = abs(f.lower_gstar_prime(f.beta) - f.upper_gstar_prime(f.beta))
        if max(value_gap, slope_gap) >= max(worst_value, worst_slope):
            worst_case = f.name
        worst_value, worst_slope = max(worst_value, value_gap), max(worst_slope, slope_gap)
    return [
        _result('continuity', f"value at beta ({draws} draws)", worst_value, 1e-9, worst_case),
        _result('continuity', f"derivative at beta ({draws} draws)", worst_slope, 1e-9, worst_case),
    ]


def loss_convexity_suite(rng, max_size, h=1e-3):
    results = []
    for f in _divergences(rng):
        top = min(2.0, f.e_domain.upper - 10 * h)
        e = np.linspace(-2.0, top, 201)
        profile = LossProfile(f, LpMode.NEG_TD_ERROR)
        loss = profile.value(e)
        curvature = (profile.value(e[1:-1] + h) - 2 * loss[1:-1] + profile.value(e[1:-1] - h)) / h ** 2
        results.append(_result('loss_convexity', f"{f.name} nonnegative", max(0.0, -np.min(loss)), 1e-12))
        results.append(_result('loss_convexity', f"{f.name} zero at 0", abs(profile.value(0.0)), 1e-12))
        results.append(_result('loss_convexity', f"{f.name} convex", max(0.0, -np.min(curvature)), 1e-6))
    return results


def equivalence_suite(rng, max_size):
    results = []
    for ref, f, grid in matched_pairs():
        tolerance = 1e-12 if ref.name == 'mse' else 1e-10
        results.append(_result('equivalence', f"{ref} vs {f.name}", verify_equivalence(ref, f, grid), tolerance))
    # both references are convex with a zero minimum at e = 0
    for ref, _, grid in matched_pairs():
        e = np.linspace(grid[0], grid[1], 401)
        loss = reference_loss(ref, e)
        second = loss[:-2] - 2 * loss[1:-1] + loss[2:]
        error = max(abs(reference_loss(ref, 0.0)), -np.min(loss), -np.min(second), 0.0)
        results.append(_result('equivalence', f"{ref} convex minimum at 0", error, 1e-12))
    return results


def full_coverage_distribution(mdp, rng):
    d = rng.uniform(0.5, 1.5, size=(mdp.n_states, mdp.n_actions))
    return d / d.sum()


def duality_suite(rng, max_size, n_instances=20):
    results = []
    limit = max(2, min(64, max_size))
    instances = [('single-state', random_mdp(1, 1, 0.9, rng))]
    for index in range(n_instances):
        n_actions = int(rng.integers(2, 4))
        n_states = int(rng.integers(2, max(3, limit // n_actions + 1)))
        n_states = max(1, min(n_states, limit // n_actions))
        instances.append((f"garnet-{index}", random_mdp(n_states, n_actions, 0.9, rng, branching=2)))

    for label, mdp in instances:
        d = full_coverage_distribution(mdp, rng)
        for name in ('chi2', 'kl'):
            for alpha_g in (0.1, 1.0):
                case = f"{label} {name} alpha_g={alpha_g:g}"
                try:
                    solution = duality_gap_report(mdp, d, CATALOG[name], alpha_g=alpha_g, max_size=max_size)
                except FlexRLError as err:
                    results.append(_result('duality', case, np.inf, 1e-5, f"{type(err).__name__}: {err}"))
                    continue
                tolerance = 1e-10 if mdp.n_states == 1 else 1e-5
                report = {
                    'instance': label, 'divergence': name, 'alpha_g': alpha_g,
                    'primal': solution.primal_objective, 'dual': solution.dual_objective,
                    'gap': solution.duality_gap, 'iterations': solution.iterations,
                }
                results.append(_result('duality', case, solution.duality_gap, tolerance, report=report))
                stationarity = np.max(np.abs(occupancy_residual(mdp, d, solution.zeta_star)))
                results.append(_result('duality', f"{case} stationarity", stationarity, 1e-6))
    return results


def perf_diff_suite(rng, max_size, n_triples=100):
    results = []
    worst_identity = worst_flow = 0.0
    for _ in range(n_triples):
        n_states = int(rng.integers(1, 7))
        n_actions = int(rng.integers(1, 4))
        mdp = random_mdp(n_states, n_actions, float(rng.uniform(0.0, 0.95)), rng)
        policy = TabularPolicy(rng.dirichlet(np.ones(n_actions), size=n_states))
        nu = rng.normal(0.0, 5.0, size=n_states)
        worst_identity = max(worst_identity, abs(perf_diff_check(mdp, policy, nu)))
        d = exact_occupancy(mdp, policy).d
        flow = abs(np.sum(d * mdp.reward) - (1.0 - mdp.gamma) * mdp.p0 @ policy_value(mdp, policy))
        worst_flow = max(worst_flow, flow)
    results.append(_result('perf_diff', f"performance-difference residual ({n_triples} triples)", worst_identity, 1e-8))
    results.append(_result('perf_diff', f"flow identity ({n_triples} triples)", worst_flow, 1e-8))
    return results


def _pinned_behavior(n_samples):
    """pi_b is exactly 1 on the first sample and exactly 0 on the rest."""
    state = adaptive_params.initial_adaptive_state(1, 2, ema_decay=0.0)
    state = replace(state, bc_logits=np.array([[0.0, -1000.0]]))
    states = np.zeros(n_samples, dtype=int)
    actions = np.ones(n_samples, dtype=int)
    actions[0] = 0
    return state, states, actions


def adaptive_suite(rng, max_size):
    results = []
    state, states, actions = _pinned_behavior(4)
    estimate = adaptive_params.estimate_alphas(state, states, actions, np.zeros(4))
    results.append(_result('adaptive', 'cos=0.5 alphas',
                           max(abs(estimate.alpha_plus - 2.0), abs(estimate.alpha_minus - 2.0)), 1e-12))

    state, states, actions = _pinned_behavior(100)
    estimate = adaptive_params.estimate_alphas(state, states, actions, np.zeros(100))
    results.append(_result('adaptive', 'cos=0.1 clamps to iota_b',
                           abs(estimate.alpha_plus - 1.0 / 0.3), 1e-12))

    chi2 = CATALOG['chi2']
    flex = compose_flex(chi2, chi2, 1.0, 1.0, 1.0)
    base = adaptive_params.initial_adaptive_state(1, 1, ema_decay=0.0)
    zero = adaptive_params.estimate_beta(base, flex, np.zeros(8))
    results.append(_result('adaptive', 'mean e = 0 gives beta = 1', abs(zero.beta - 1.0), 1e-12))
    shifted = adaptive_params.estimate_beta(base, flex, np.full(8, 0.1))
    results.append(_result('adaptive', 'chi2 mean e = 0.1 gives beta = 1.1', abs(shifted.beta - 1.1), 1e-12))
    clipped = adaptive_params.estimate_beta(base, flex, np.full(8, 0.3))
    results.append(_result('adaptive', 'mean e clipped to 0.15', abs(clipped.beta - 1.15), 1e-12))

    decay, x0, x = 0.99, float(rng.normal()), float(rng.normal())
    value = x0
    for _ in range(50):
        value = adaptive_params.ema(value, x, decay)
    results.append(_result('adaptive', 'ema closed form', abs(value - (x + (x0 - x) * decay ** 50)), 1e-12))
    return results


SUITES = {
    'generator': generator_suite,
    'conjugacy': conjugacy_suite,
    'continuity': continuity_suite,
    'loss_convexity': loss_convexity_suite,
    'equivalence': equivalence_suite,
    'duality': duality_suite,
    'perf_diff': perf_diff_suite,
    'adaptive': adaptive_suite,
}


def run_suites(names=None, seed=0, max_size=64):
    results = []
    for name in names or SUITES:
        rng = np.random.default_rng([seed, list(SUITES).index(name)])
        suite_results = SUITES[name](rng, max_size)
        failed = sum(not result.passed for result in suite_results)
        logger.info("suite %s: %d checks, %d failed", name, len(suite_results), failed)
        results.extend(suite_results)
    return results
