"""
Finite tabular MDPs, exact policy evaluation and offline dataset synthesis.

Tables follow the (state, action, next_state) axis order throughout:
``transition[s, a, s']``, ``reward[s, a]``, ``policy.probs[s, a]``.
"""
from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .exceptions import (
    CalibrationFailure, ConfigError, ConvergenceError, InvalidModel, ShapeError,
    SingularSystem, SizeError,
)

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12
MAX_GRID_CELLS = 400

# up, right, down, left on a row-major grid
GRID_MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))


def _frozen(array, dtype=float):
    array = np.array(array, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transition: np.ndarray
    reward: np.ndarray
    p0: np.ndarray
    gamma: float
    name: str = 'custom'

    def __post_init__(self):
        transition = _frozen(self.transition)
        reward = _frozen(self.reward)
        p0 = _frozen(self.p0)
        object.__setattr__(self, 'transition', transition)
        object.__setattr__(self, 'reward', reward)
        object.__setattr__(self, 'p0', p0)
        object.__setattr__(self, 'gamma', float(self.gamma))

        if transition.ndim != 3 or transition.shape[0] != transition.shape[2]:
            raise InvalidModel(f"transition must have shape (S, A, S), got {transition.shape}")
        n_states, n_actions = transition.shape[:2]
        if n_states < 1 or n_actions < 1:
            raise InvalidModel("an MDP needs at least one state and one action")
        if reward.shape != (n_states, n_actions):
            raise InvalidModel(f"reward must have shape {(n_states, n_actions)}, got {reward.shape}")
        if p0.shape != (n_states,):
            raise InvalidModel(f"p0 must have shape {(n_states,)}, got {p0.shape}")
        if np.any(transition < 0) or np.any(np.abs(transition.sum(axis=2) - 1.0) > PROB_TOL):
            raise InvalidModel("every transition row must be a probability distribution")
        if np.any(p0 < 0) or abs(p0.sum() - 1.0) > PROB_TOL:
            raise InvalidModel("p0 must be a probability distribution")
        if not np.all(np.isfinite(reward)):
            raise InvalidModel("rewards must be finite")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidModel(f"gamma must lie in [0, 1), got {self.gamma!r}")

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]

    def absorbing_states(self):
        """States that every action maps back to themselves with probability 1."""
        stay = self.transition[np.arange(self.n_states), :, np.arange(self.n_states)]
        return np.flatnonzero(np.all(stay == 1.0, axis=1))

    def fingerprint(self):
        digest = hashlib.sha256()
        for array in (self.transition, self.reward, self.p0):
            digest.update(np.ascontiguousarray(array, dtype='<f8').tobytes())
        digest.update(repr(self.gamma).encode())
        return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        object.__setattr__(self, 'probs', probs)
        if probs.ndim != 2:
            raise ShapeError(f"policy table must be (S, A), got {probs.shape}")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > PROB_TOL):
            raise InvalidModel("every policy row must be a probability distribution")

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions):
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @classmethod
    def from_logits(cls, logits):
        logits = np.asarray(logits, dtype=float)
        shifted = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(shifted)
        return cls(probs / probs.sum(axis=1, keepdims=True))

    def greedy(self):
        return np.argmax(self.probs, axis=1)


@dataclass(frozen=True, eq=False)
class OccupancyMeasure:
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'd', _frozen(self.d))


class Transition(NamedTuple):
    s: int
    a: int
    r: float
    s_next: int
    done: bool


@dataclass(frozen=True)
class BehaviorComponent:
    """One behavior policy of a dataset mixture; temperature 0 is the greedy expert."""
    label: str
    target: float
    achieved: float
    temperature: float
    n_trajectories: int


@dataclass(frozen=True, eq=False)
class OfflineDataset:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    initial_states: np.ndarray
    n_states: int
    n_actions: int
    mixture_label: str = 'custom'
    components: tuple = field(default=())

    def __post_init__(self):
        for name, dtype in (('states', int), ('actions', int), ('rewards', float),
                            ('next_states', int), ('dones', bool), ('initial_states', int)):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype))
        n = self.states.size
        if not (self.actions.size == self.rewards.size == self.next_states.size == self.dones.size == n):
            raise ShapeError("transition columns must have equal length")
        if self.initial_states.size == 0:
            raise ShapeError("a dataset needs at least one initial state")
        for column, bound in ((self.states, self.n_states), (self.next_states, self.n_states),
                              (self.initial_states, self.n_states), (self.actions, self.n_actions)):
            if column.size and (column.min() < 0 or column.max() >= bound):
                raise ShapeError(f"ids must lie in [0, {bound})")

    def __len__(self):
        return self.states.size

    def transitions(self):
        for row in zip(self.states, self.actions, self.rewards, self.next_states, self.dones):
            yield Transition(int(row[0]), int(row[1]), float(row[2]), int(row[3]), bool(row[4]))

    def scaled(self, reward_scale):
        """A copy with every reward multiplied by ``reward_scale``."""
        return OfflineDataset(
            self.states, self.actions, self.rewards * reward_scale, self.next_states, self.dones,
            self.initial_states, self.n_states, self.n_actions, self.mixture_label, self.components,
        )

    def check_consistent(self, mdp):
        if (self.n_states, self.n_actions) != (mdp.n_states, mdp.n_actions):
            raise ShapeError(
                f"dataset is {self.n_states}x{self.n_actions}, mdp is {mdp.n_states}x{mdp.n_actions}"
            )
        probabilities = mdp.transition[self.states, self.actions, self.next_states]
        if np.any(probabilities <= 0):
            raise InvalidModel("dataset contains transitions the model assigns zero probability")


def _require_state_table(mdp, nu):
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (mdp.n_states,):
        raise ShapeError(f"expected a state table of length {mdp.n_states}, got shape {nu.shape}")
    return nu


def _require_policy(mdp, policy):
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ShapeError(f"policy shape {policy.probs.shape} does not match the mdp")
    return policy.probs


def apply_T(mdp, nu):
    nu = _require_state_table(mdp, nu)
    return np.einsum('sap,p->sa', mdp.transition, nu)


def q_values(mdp, nu):
    return mdp.reward + mdp.gamma * apply_T(mdp, nu)


def td_error(mdp, nu):
    nu = _require_state_table(mdp, nu)
    return q_values(mdp, nu) - nu[:, None]


def greedy_policy(mdp, nu):
    return TabularPolicy.deterministic(np.argmax(q_values(mdp, nu), axis=1), mdp.n_actions)


def _policy_chain(mdp, policy):
    probs = _require_policy(mdp, policy)
    P_pi = np.einsum('sa,sap->sp', probs, mdp.transition)
    r_pi = np.einsum('sa,sa->s', probs, mdp.reward)
    return P_pi, r_pi


def _solve(matrix, rhs):
    try:
        solution = linalg.solve(matrix, rhs)
    except linalg.LinAlgError as err:
        raise SingularSystem(str(err)) from err
    if not np.all(np.isfinite(solution)):
        raise SingularSystem("linear solve produced non-finite values")
    return solution


def policy_value(mdp, policy):
    """V^pi from the linear system (I - gamma P_pi) V = r_pi."""
    P_pi, r_pi = _policy_chain(mdp, policy)
    system = np.eye(mdp.n_states) - mdp.gamma * P_pi
    V = _solve(system, r_pi)
    residual = np.max(np.abs(system @ V - r_pi))
    if residual > 1e-10 * max(1.0, np.max(np.abs(V))):
        raise SingularSystem(f"policy evaluation residual {residual:.3e} is too large")
    return V


def exact_occupancy(mdp, policy):
    """Normalized discounted state-action occupancy d^pi."""
    P_pi, _ = _policy_chain(mdp, policy)
    d_s = _solve(np.eye(mdp.n_states) - mdp.gamma * P_pi.T, (1.0 - mdp.gamma) * mdp.p0)
    return OccupancyMeasure(d_s[:, None] * policy.probs)


def flow_residual(mdp, occupancy):
    """sum_a d(s,a) - (1-gamma) p0(s) - gamma sum_{s',a'} T(s|s',a') d(s',a')."""
    d = occupancy.d if isinstance(occupancy, OccupancyMeasure) else np.asarray(occupancy, dtype=float)
    if d.shape != (mdp.n_states, mdp.n_actions):
        raise ShapeError(f"occupancy shape {d.shape} does not match the mdp")
    inflow = np.einsum('sa,sap->p', d, mdp.transition)
    return d.sum(axis=1) - (1.0 - mdp.gamma) * mdp.p0 - mdp.gamma * inflow


def perf_diff_check(mdp, dataset_policy, nu):
    """
    Residual of the performance difference identity
    E_p0[V^D] - E_p0[nu] = E_{d^D}[e_nu] / (1 - gamma); zero up to round-off.
    """
    nu = _require_state_table(mdp, nu)
    V = policy_value(mdp, dataset_policy)
    d = exact_occupancy(mdp, dataset_policy).d
    advantage = np.sum(d * td_error(mdp, nu)) / (1.0 - mdp.gamma)
    return float(mdp.p0 @ V - mdp.p0 @ nu - advantage)


def value_iteration(mdp, tol=1e-10, max_iterations=None):
    """Optimal state values with sup-norm Bellman residual at most ``tol``."""
    if not tol > 0:
        raise ConfigError(f"tol must be positive, got {tol!r}")
    if max_iterations is None:
        scale = max(1.0, float(np.max(np.abs(mdp.reward)))) / (1.0 - mdp.gamma)
        max_iterations = 100 + int(np.ceil(np.log(tol / scale) / np.log(max(mdp.gamma, 1e-12))))
    V = np.zeros(mdp.n_states)
    for iteration in range(max_iterations + 1):
        V_next = q_values(mdp, V).max(axis=1)
        residual = np.max(np.abs(V_next - V))
        V = V_next
        if residual <= tol:
            logger.debug("value iteration converged after %d sweeps", iteration + 1)
            return V
    raise ConvergenceError(f"value iteration did not reach {tol:g} in {max_iterations} sweeps")


@dataclass(frozen=True)
class ReturnBounds:
    random: float
    optimal: float

    def normalize(self, value):
        span = self.optimal - self.random
        if abs(span) <= 1e-12:
            return 100.0
        return 100.0 * (value - self.random) / span


def return_bounds(mdp):
    """p0-averaged exact returns of the uniform policy and of the optimal greedy policy."""
    uniform = TabularPolicy.uniform(mdp.n_states, mdp.n_actions)
    expert = greedy_policy(mdp, value_iteration(mdp))
    return ReturnBounds(
        random=float(mdp.p0 @ policy_value(mdp, uniform)),
        optimal=float(mdp.p0 @ policy_value(mdp, expert)),
    )


def normalized_return(mdp, policy, bounds=None):
    bounds = bounds or return_bounds(mdp)
    return bounds.normalize(float(mdp.p0 @ policy_value(mdp, policy)))


def make_gridworld(width, height, gamma=0.9, noise=0.0):
    """
    Four-action gridworld with its goal in the corner (width-1, height-1).

    The goal pays 1 once and every action there leads to an absorbing,
    zero-reward sink numbered ``width * height``. With noise 0 the optimal
    value from a cell at Manhattan distance d is gamma**d. A slip sends the
    agent in one of the three other directions, chosen uniformly.
    """
    width, height = int(width), int(height)
    if width < 1 or height < 1:
        raise SizeError(f"grid dimensions must be positive, got {width}x{height}")
    if width * height > MAX_GRID_CELLS:
        raise SizeError(f"a {width}x{height} grid exceeds {MAX_GRID_CELLS} cells")
    if not 0.0 <= noise < 1.0:
        raise InvalidModel(f"noise must lie in [0, 1), got {noise!r}")

    n_cells = width * height
    goal, sink = n_cells - 1, n_cells
    transition = np.zeros((n_cells + 1, 4, n_cells + 1))
    transition[goal, :, sink] = 1.0
    transition[sink, :, sink] = 1.0
    for state in range(goal):
        x, y = state % width, state // width
        for action in range(4):
            for direction, (dx, dy) in enumerate(GRID_MOVES):
                probability = 1.0 - noise if direction == action else noise / 3.0
                if probability == 0.0:
                    continue
                nx, ny = x + dx, y + dy
                if not (0 <= nx < width and 0 <= ny < height):
                    nx, ny = x, y
                transition[state, action, ny * width + nx] += probability

    reward = np.zeros((n_cells + 1, 4))
    reward[goal] = 1.0
    p0 = np.zeros(n_cells + 1)
    if n_cells == 1:
        p0[goal] = 1.0
    else:
        p0[:goal] = 1.0 / goal
    return TabularMdp(transition, reward, p0, gamma, name=f"grid{width}x{height}")


_ENV_PATTERN = re.compile(r'^grid(?P<width>\d+)(?:x(?P<height>\d+))?$')


def make_env(name, gamma=0.9, noise=0.1):
    """Build the environment named ``gridN`` or ``gridWxH``."""
    match = _ENV_PATTERN.match(name.strip().lower())
    if match is None:
        raise ConfigError(f"unknown environment {name!r}; use gridN or gridWxH")
    width = int(match.group('width'))
    height = int(match.group('height') or width)
    return make_gridworld(width, height, gamma=gamma, noise=noise)


def random_mdp(n_states, n_actions, gamma=0.9, rng=None, branching=None):
    """
    Garnet-style instance: each (s, a) row spreads Dirichlet weights over
    ``branching`` distinct successors; rewards are uniform in [0, 1).
    """
    rng = rng if rng is not None else np.random.default_rng()
    branching = n_states if branching is None else min(int(branching), n_states)
    transition = np.zeros((n_states, n_actions, n_states))
    for state in range(n_states):
        for action in range(n_actions):
            successors = rng.choice(n_states, size=branching, replace=False)
            transition[state, action, successors] = rng.dirichlet(np.ones(branching))
    transition /= transition.sum(axis=2, keepdims=True)
    reward = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    p0 = rng.dirichlet(np.ones(n_states))
    return TabularMdp(transition, reward, p0 / p0.sum(), gamma, name=f"garnet{n_states}x{n_actions}")


def _sample_rows(probs, rng):
    """One categorical draw per row of ``probs``."""
    cumulative = np.cumsum(probs, axis=1)
    draws = rng.random(probs.shape[0])[:, None]
    return np.minimum((cumulative <= draws).sum(axis=1), probs.shape[1] - 1)


@dataclass(frozen=True)
class Rollouts:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    initial_states: np.ndarray


def rollout(mdp, policy, n_trajectories, horizon, rng):
    """Run ``n_trajectories`` episodes of ``horizon`` steps; arrays are (n, horizon)."""
    probs = _require_policy(mdp, policy)
    start = rng.choice(mdp.n_states, size=n_trajectories, p=mdp.p0)
    states = np.empty((n_trajectories, horizon), dtype=int)
    actions = np.empty_like(states)
    next_states = np.empty_like(states)
    current = start
    for t in range(horizon):
        chosen = _sample_rows(probs[current], rng)
        following = _sample_rows(mdp.transition[current, chosen], rng)
        states[:, t], actions[:, t], next_states[:, t] = current, chosen, following
        current = following
    return Rollouts(states, actions, mdp.reward[states, actions], next_states, start)


MIXTURES = {
    '2p': (('expert', 100.0), ('p40', 40.0)),
    '4p': (('expert', 100.0), ('p60', 60.0), ('p30', 30.0), ('p10', 10.0)),
    '10p': tuple((f"p{target}", float(target)) for target in range(9, 91, 9)),
}

CALIBRATION_TOLERANCE = 0.5
# log10 of the temperature bracket, in units of the largest |advantage|
LOG_TEMPERATURE_BRACKET = (-4.0, 4.0)


@dataclass(frozen=True, eq=False)
class Checkpoint:
    temperature: float
    policy: TabularPolicy
    normalized: float


def boltzmann_checkpoint(mdp, temperature, bounds, V=None):
    """softmax(A*(s, a) / temperature); temperature 0 gives the greedy expert."""
    V = value_iteration(mdp) if V is None else V
    if temperature <= 0:
        policy = greedy_policy(mdp, V)
    else:
        policy = TabularPolicy.from_logits((q_values(mdp, V) - V[:, None]) / temperature)
    return Checkpoint(float(temperature), policy, normalized_return(mdp, policy, bounds))


def calibrate(mdp, target, bounds, tolerance=CALIBRATION_TOLERANCE, max_halvings=80):
    """
    Bisect the log-temperature of the Boltzmann policy over A* until its
    exact normalized return is within ``tolerance`` of ``target``. High
    temperatures approach the uniform policy (0), low ones the expert (100).
    """
    V = value_iteration(mdp)
    advantage = q_values(mdp, V) - V[:, None]
    scale = max(float(np.max(np.abs(advantage))), 1e-12)

    def at(log_temperature):
        return boltzmann_checkpoint(mdp, scale * 10.0 ** log_temperature, bounds, V)

    sharp, flat = LOG_TEMPERATURE_BRACKET
    ends = (at(sharp), at(flat))
    for end in ends:
        if abs(end.normalized - target) <= tolerance:
            return end
    if not ends[1].normalized < target < ends[0].normalized:
        raise CalibrationFailure(
            f"target {target:g} is outside the returns reachable by temperature "
            f"({ends[1].normalized:.2f} to {ends[0].normalized:.2f})"
        )
    for _ in range(max_halvings):
        middle = 0.5 * (sharp + flat)
        checkpoint = at(middle)
        if abs(checkpoint.normalized - target) <= tolerance:
            return checkpoint
        if checkpoint.normalized > target:
            sharp = middle
        else:
            flat = middle
    raise CalibrationFailure(f"no temperature within {tolerance:g} points of {target:g}")


def synthesize_dataset(mdp, mixture, n_trajectories, horizon, seed):
    """
    Roll out the behaviors of a named mixture with equal trajectory shares.
    The expert is greedy with respect to V*; each other component is the
    Boltzmann policy whose normalized return is calibrated to its target.
    """
    if mixture not in MIXTURES:
        raise ConfigError(f"unknown mixture {mixture!r}; choose from {sorted(MIXTURES)}")
    if n_trajectories < len(MIXTURES[mixture]) or horizon < 1:
        raise ConfigError("need at least one trajectory per component and a positive horizon")

    rng = np.random.default_rng(seed)
    bounds = return_bounds(mdp)

    plan = MIXTURES[mixture]
    shares = np.full(len(plan), n_trajectories // len(plan))
    shares[: n_trajectories % len(plan)] += 1

    columns = {key: [] for key in ('states', 'actions', 'rewards', 'next_states')}
    initial_states, components = [], []
    absorbing = mdp.absorbing_states()
    for (label, target), share in zip(plan, shares):
        if label == 'expert':
            chosen = boltzmann_checkpoint(mdp, 0.0, bounds)
        else:
            chosen = calibrate(mdp, target, bounds)
        logger.info("%s component %s: normalized return %.2f (temperature %.4g, %d trajectories)",
                    mixture, label, chosen.normalized, chosen.temperature, share)
        runs = rollout(mdp, chosen.policy, int(share), horizon, rng)
        for key in columns:
            columns[key].append(getattr(runs, key).ravel())
        initial_states.append(runs.initial_states)
        components.append(BehaviorComponent(label, target, chosen.normalized, chosen.temperature, int(share)))

    states = np.concatenate(columns['states'])
    next_states = np.concatenate(columns['next_states'])
    dones = np.isin(next_states, absorbing) & ~np.isin(states, absorbing)
    return OfflineDataset(
        states=states,
        actions=np.concatenate(columns['actions']),
        rewards=np.concatenate(columns['rewards']),
        next_states=next_states,
        dones=dones,
        initial_states=np.concatenate(initial_states),
        n_states=mdp.n_states,
        n_actions=mdp.n_actions,
        mixture_label=mixture,
        components=tuple(components),
    )


@dataclass(frozen=True)
class DatasetRequest:
    """Everything needed to rebuild an environment and regenerate its dataset."""
    env: str
    mixture: str
    seed: int = 0
    n_trajectories: int = 100
    horizon: int = 50
    gamma: float = 0.9
    noise: float = 0.1

    @classmethod
    def from_meta(cls, meta):
        try:
            return cls(env=meta['env'], mixture=meta['mixture'], seed=int(meta['seed']),
                       n_trajectories=int(meta['n_trajectories']), horizon=int(meta['horizon']),
                       gamma=float(meta['gamma']), noise=float(meta['noise']))
        except (KeyError, ValueError) as err:
            raise ConfigError(f"dataset metadata cannot rebuild its environment: {err}") from err

    def build_mdp(self):
        return make_env(self.env, gamma=self.gamma, noise=self.noise)

    def synthesize(self):
        mdp = self.build_mdp()
        return mdp, synthesize_dataset(mdp, self.mixture, self.n_trajectories, self.horizon, self.seed)

    def meta(self):
        return {'env': self.env, 'seed': self.seed, 'n_trajectories': self.n_trajectories,
                'horizon': self.horizon, 'gamma': self.gamma, 'noise': self.noise,
                'mdp_hash': self.build_mdp().fingerprint()}


def empirical_occupancy(dataset):
    counts = np.zeros((dataset.n_states, dataset.n_actions))
    np.add.at(counts, (dataset.states, dataset.actions), 1.0)
    return counts / max(len(dataset), 1)


def empirical_policy(dataset):
    """Action frequencies per state; unvisited states fall back to uniform."""
    counts = np.zeros((dataset.n_states, dataset.n_actions))
    np.add.at(counts, (dataset.states, dataset.actions), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    probs = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / dataset.n_actions)
    return TabularPolicy(probs)


def visited_states(dataset):
    return np.unique(dataset.states)
