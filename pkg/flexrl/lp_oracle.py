"""
Deterministic ground truth for the regularized LP pair.

The primal is the unconstrained value problem

    min_nu  alpha . nu + c + alpha_g * sum_p w_p g(e_nu(p) / alpha_g)

over the dataset support p = (s, a) with weights w = d^D, and the dual is

    max_zeta  c + sum_p w_p (zeta_p r_p - alpha_g g*(zeta_p))   s.t.  A zeta = alpha

with A[s, p] = w_p [s_p = s] - gamma w_p T(s | p). Both are solved with
Newton steps on analytic derivatives; no sampling happens here.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .divergences import LpMode
from .exceptions import (
    ConvergenceError, CoverageError, DomainBlowup, DomainError, Infeasible, ShapeError, SizeError,
)
from .mdp import OccupancyMeasure, OfflineDataset, empirical_occupancy

logger = logging.getLogger(__name__)

DUAL_MAX_SIZE = 256
GRADIENT_TOL = 1e-8
FEASIBILITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class LpSolution:
    nu_star: np.ndarray
    zeta_star: np.ndarray
    primal_objective: float
    dual_objective: float
    duality_gap: float
    iterations: int = 0
    negative_zeta_fraction: float = 0.0
    support: np.ndarray = field(default=None, repr=False)
    multipliers: np.ndarray = field(default=None, repr=False)


def data_distribution(source, n_states=None, n_actions=None):
    """d^D as an (S, A) table, from a dataset, an occupancy measure or a raw table."""
    if isinstance(source, OfflineDataset):
        return empirical_occupancy(source)
    d = source.d if isinstance(source, OccupancyMeasure) else np.asarray(source, dtype=float)
    if n_states is not None and d.shape != (n_states, n_actions):
        raise ShapeError(f"expected a ({n_states}, {n_actions}) distribution, got {d.shape}")
    if d.ndim != 2 or np.any(d < 0) or abs(d.sum() - 1.0) > 1e-9:
        raise ShapeError("a data distribution must be a nonnegative (S, A) table summing to 1")
    return d


def lp_weights(mdp, d, lp_mode):
    """alpha(s) and the additive constant of the L_P term for ``lp_mode``."""
    lp_mode = LpMode(lp_mode)
    if lp_mode == LpMode.INIT_DIST:
        return (1.0 - mdp.gamma) * mdp.p0, 0.0
    if lp_mode == LpMode.UNIFORM_VALUE:
        return (1.0 - mdp.gamma) * d.sum(axis=1), 0.0
    # -E_d[e_nu] = (d_s - gamma T_* d) . nu - E_d[r]
    inflow = np.einsum('sa,sap->p', d, mdp.transition)
    return d.sum(axis=1) - mdp.gamma * inflow, -float(np.sum(d * mdp.reward))


@dataclass(frozen=True, eq=False)
class _Problem:
    """The LP data restricted to the supported pairs and the states they touch."""
    pairs: tuple
    weights: np.ndarray
    rewards: np.ndarray
    G: np.ndarray
    alpha: np.ndarray
    constant: float
    states: np.ndarray
    support: np.ndarray


def _build_problem(mdp, dataset, lp_mode):
    d = data_distribution(dataset, mdp.n_states, mdp.n_actions)
    alpha, constant = lp_weights(mdp, d, lp_mode)
    support = d > 0
    pairs = np.nonzero(support)
    weights = d[pairs]

    supported_states = support.any(axis=1)
    incoming = np.einsum('p,pq->q', weights, mdp.transition[pairs]) > 0
    uncovered = ~supported_states & ((np.abs(alpha) > 0) | incoming)
    if np.any(uncovered):
        raise CoverageError(
            f"states {np.flatnonzero(uncovered).tolist()} carry weight or inflow but no dataset pairs"
        )

    states = np.flatnonzero(supported_states)
    G = mdp.gamma * mdp.transition[pairs][:, states]
    G[np.arange(weights.size), np.searchsorted(states, pairs[0])] -= 1.0
    return _Problem(
        pairs=pairs, weights=weights, rewards=mdp.reward[pairs], G=G,
        alpha=alpha[states], constant=constant, states=states, support=support,
    )


def _primal_terms(problem, f, alpha_g, nu):
    u = (problem.rewards + problem.G @ nu) / alpha_g
    if not np.all(f.e_domain.interior(u)):
        return np.inf, None, None, u
    value = problem.alpha @ nu + problem.constant + alpha_g * problem.weights @ f.conjugate(u)
    slope = problem.weights * f.conjugate_prime(u)
    grad = problem.alpha + problem.G.T @ slope
    curvature = problem.weights * f.conjugate_second(u) / alpha_g
    hess = problem.G.T @ (curvature[:, None] * problem.G)
    return float(value), grad, hess, u


def _newton_direction(hess, grad):
    try:
        return -linalg.solve(hess, grad, assume_a='pos')
    except (linalg.LinAlgError, ValueError):
        return -linalg.lstsq(hess, grad)[0]


def solve_regularized_nu(mdp, dataset, flex, lp_mode=LpMode.INIT_DIST, alpha_g=1.0,
                         nu0=None, gtol=GRADIENT_TOL, step_budget=200):
    """
    Minimize the unconstrained value objective with damped Newton steps; the
    backtracking line search keeps every TD error inside the conjugate's domain.
    """
    problem = _build_problem(mdp, dataset, lp_mode)
    n = problem.states.size
    if nu0 is None:
        # every TD error starts strictly negative, which is interior for all generators
        level = (max(float(np.max(mdp.reward)), 0.0) + 1.0) / (1.0 - mdp.gamma)
        nu = np.full(n, level)
    else:
        nu = np.asarray(nu0, dtype=float)[problem.states]

    value, grad, hess, u = _primal_terms(problem, flex, alpha_g, nu)
    if not np.isfinite(value):
        raise DomainBlowup(f"starting TD errors leave the domain {flex.e_domain} of {flex.name}")

    for iteration in range(step_budget):
        if np.max(np.abs(grad)) <= gtol:
            break
        direction = _newton_direction(hess, grad)
        slope = grad @ direction
        if slope >= 0:
            direction, slope = -grad, -(grad @ grad)
        step = 1.0
        while True:
            trial = nu + step * direction
            trial_value, trial_grad, trial_hess, _ = _primal_terms(problem, flex, alpha_g, trial)
            if trial_value <= value + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-16:
                if np.isfinite(trial_value) or np.max(np.abs(grad)) <= 1e3 * gtol:
                    # round-off floor: no representable decrease remains
                    logger.debug("primal line search stalled at |grad| %.3e", np.max(np.abs(grad)))
                    return _primal_solution(mdp, problem, flex, alpha_g, nu, value, iteration)
                raise DomainBlowup(f"TD errors are pinned at the boundary of {flex.e_domain}")
        nu, value, grad, hess = trial, trial_value, trial_grad, trial_hess
    else:
        if np.max(np.abs(grad)) > gtol:
            raise ConvergenceError(
                f"primal solve left |grad| = {np.max(np.abs(grad)):.3e} after {step_budget} steps"
            )
        iteration = step_budget
    logger.debug("primal solve for %s converged in %d Newton steps", flex.name, iteration)
    return _primal_solution(mdp, problem, flex, alpha_g, nu, value, iteration)


def _primal_solution(mdp, problem, f, alpha_g, nu, value, iterations):
    u = (problem.rewards + problem.G @ nu) / alpha_g
    zeta = np.zeros((mdp.n_states, mdp.n_actions))
    zeta[problem.pairs] = f.gstar_prime_inv(u)
    full_nu = np.zeros(mdp.n_states)
    full_nu[problem.states] = nu
    return LpSolution(
        nu_star=full_nu,
        zeta_star=zeta,
        primal_objective=value,
        dual_objective=np.nan,
        duality_gap=np.nan,
        iterations=iterations,
        negative_zeta_fraction=float(np.mean(zeta[problem.pairs] < 0)),
        support=problem.support,
    )


def _dual_terms(problem, f, alpha_g, zeta):
    w = problem.weights
    grad = -w * problem.rewards + alpha_g * w * f.gstar_prime(zeta)
    curvature = alpha_g * w * f.gstar_second(zeta)
    return grad, curvature


def dual_objective(problem, f, alpha_g, zeta):
    return float(problem.constant + problem.weights @ (zeta * problem.rewards - alpha_g * f.gstar(zeta)))


def solve_regularized_dual(mdp, dataset, flex, alpha_g=1.0, lp_mode=LpMode.INIT_DIST,
                           max_size=DUAL_MAX_SIZE, tol=FEASIBILITY_TOL, step_budget=200):
    """
    Maximize the regularized flow objective under the hard flow equality with
    an infeasible-start Newton method on the KKT system. The equality is
    held through the KKT multipliers rather than a quadratic penalty; those
    multipliers equal the optimal values nu*.
    """
    if mdp.n_states * mdp.n_actions > max_size:
        raise SizeError(f"dual solve is limited to {max_size} state-action pairs")
    problem = _build_problem(mdp, dataset, lp_mode)
    A = -problem.G.T * problem.weights[None, :]
    b = problem.alpha
    m, n = A.shape
    zeta = np.ones(n)
    lam = np.zeros(m)

    def residuals(z, multipliers):
        grad, _ = _dual_terms(problem, flex, alpha_g, z)
        return np.concatenate([grad + A.T @ multipliers, A @ z - b])

    current = residuals(zeta, lam)
    for iteration in range(step_budget):
        primal_res = np.max(np.abs(current[n:]))
        if primal_res <= tol * 1e-2 and np.max(np.abs(current[:n])) <= 1e-12 * max(1.0, alpha_g):
            break
        _, curvature = _dual_terms(problem, flex, alpha_g, zeta)
        kkt = np.block([[np.diag(curvature), A.T], [A, np.zeros((m, m))]])
        try:
            delta = linalg.solve(kkt, -current)
        except linalg.LinAlgError as err:
            raise Infeasible(f"flow constraints are degenerate: {err}") from err
        d_zeta, d_lam = delta[:n], delta[n:]
        norm = np.linalg.norm(current)
        step = 1.0
        while True:
            trial = zeta + step * d_zeta
            if np.all(flex.zeta_domain.interior(trial)):
                trial_res = residuals(trial, lam + step * d_lam)
                if np.linalg.norm(trial_res) <= (1.0 - 0.01 * step) * norm:
                    break
            step *= 0.5
            if step < 1e-12:
                break
        if step < 1e-12:
            logger.debug("dual line search stalled at residual %.3e", norm)
            break
        zeta, lam, current = trial, lam + step * d_lam, trial_res

    if np.max(np.abs(A @ zeta - b)) > tol:
        raise Infeasible(
            f"no flow on the dataset support satisfies the constraints (residual {np.max(np.abs(A @ zeta - b)):.3e})"
        )
    logger.debug("dual solve for %s finished after %d Newton steps", flex.name, iteration + 1)

    table = np.zeros((mdp.n_states, mdp.n_actions))
    table[problem.pairs] = zeta
    multipliers = np.zeros(mdp.n_states)
    multipliers[problem.states] = lam
    objective = dual_objective(problem, flex, alpha_g, zeta)
    return LpSolution(
        nu_star=multipliers,
        zeta_star=table,
        primal_objective=np.nan,
        dual_objective=objective,
        duality_gap=np.nan,
        iterations=iteration + 1,
        negative_zeta_fraction=float(np.mean(zeta < 0)),
        support=problem.support,
        multipliers=multipliers,
    )


def occupancy_residual(mdp, dataset, zeta, lp_mode=LpMode.INIT_DIST):
    """(B_* zeta)(s) - alpha(s) - gamma (T_* zeta)(s) under d^D weighting."""
    d = data_distribution(dataset, mdp.n_states, mdp.n_actions)
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != d.shape:
        raise ShapeError(f"zeta must have shape {d.shape}, got {zeta.shape}")
    alpha, _ = lp_weights(mdp, d, lp_mode)
    mass = np.where(d > 0, d * np.where(d > 0, zeta, 0.0), 0.0)
    return mass.sum(axis=1) - alpha - mdp.gamma * np.einsum('sa,sap->p', mass, mdp.transition)


def duality_gap_report(mdp, dataset, flex, alpha_g=1.0, lp_mode=LpMode.INIT_DIST,
                       max_size=DUAL_MAX_SIZE):
    primal = solve_regularized_nu(mdp, dataset, flex, lp_mode=lp_mode, alpha_g=alpha_g)
    dual = solve_regularized_dual(mdp, dataset, flex, alpha_g=alpha_g, lp_mode=lp_mode, max_size=max_size)
    gap = abs(primal.primal_objective - dual.dual_objective)
    logger.debug("%s alpha_g=%g: primal %.12g dual %.12g gap %.3e",
                 flex.name, alpha_g, primal.primal_objective, dual.dual_objective, gap)
    return LpSolution(
        nu_star=primal.nu_star,
        zeta_star=primal.zeta_star,
        primal_objective=primal.primal_objective,
        dual_objective=dual.dual_objective,
        duality_gap=gap,
        iterations=primal.iterations + dual.iterations,
        negative_zeta_fraction=primal.negative_zeta_fraction,
        support=primal.support,
        multipliers=dual.multipliers,
    )


def solve_scalar_nu(mdp, dataset, flex, lp_mode=LpMode.INIT_DIST, alpha_g=1.0, radius=50.0):
    """One-state reference: bounded Brent search on the scalar objective."""
    if mdp.n_states != 1:
        raise ShapeError("the scalar reference needs a single-state MDP")
    problem = _build_problem(mdp, dataset, lp_mode)
    high = (max(float(np.max(mdp.reward)), 0.0) + 1.0) / (1.0 - mdp.gamma)

    def objective(nu):
        try:
            value, *_ = _primal_terms(problem, flex, alpha_g, np.array([nu]))
        except DomainError:
            return np.inf
        return value if np.isfinite(value) else 1e300

    result = optimize.minimize_scalar(
        objective, bounds=(high - radius, high + radius), method='bounded',
        options={'xatol': 1e-12, 'maxiter': 2000},
    )
    return float(result.x), float(result.fun)
