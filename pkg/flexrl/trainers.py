"""
Tabular Flex-f-Q and Flex-f-DICE.

Flex-f-Q fits a critic Q toward r + gamma nu(s') and moves nu with a
semi-gradient of -e + g(e) on e = Q - nu. Flex-f-DICE moves nu with the full
gradient of the regularized objective on e = r + gamma nu(s') - nu(s) and
regresses e_phi onto it. Both extract the policy by weighted regression on
the dataset actions. Every gradient is a mean over the batch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from django.db import models
from scipy import special

from . import adaptive as adaptive_params
from .divergences import CATALOG, FlexF, LossProfile, LpMode, as_flex
from .exceptions import ConfigError, NanError
from .mdp import TabularPolicy, policy_value, return_bounds, rollout

logger = logging.getLogger(__name__)

AWR_EXP_CAP = 20.0


class Algorithm(models.TextChoices):
    FLEX_F_Q = 'flex_f_q', 'Flex-f-Q'
    FLEX_F_DICE = 'flex_f_dice', 'Flex-f-DICE'


ALGORITHM_DEFAULTS = {
    Algorithm.FLEX_F_Q: {'lp_mode': LpMode.NEG_ESTIMATED_TD, 'alpha_g': 1.0},
    Algorithm.FLEX_F_DICE: {'lp_mode': LpMode.INIT_DIST, 'alpha_g': 0.1},
}


@dataclass(frozen=True)
class TrainConfig:
    algorithm: Algorithm = Algorithm.FLEX_F_Q
    flex: object = field(default_factory=lambda: CATALOG['chi2'])
    lp_mode: LpMode = None
    alpha_g: float = None
    lr_nu: float = 1e-2
    lr_critic: float = 1e-2
    lr_policy: float = 1e-2
    batch_size: int = 512
    steps: int = 10000
    awr_temperature: float = 3.0
    e_clip: tuple = (-0.2, 0.15)
    reward_scale: float = 1.0
    seed: int = 0
    adaptive: bool = False
    iota_b: float = 0.3
    ema_decay: float = 0.99
    clip_e: bool = False
    eval_interval: int = 1000
    eval_episodes: int = 20
    eval_horizon: int = 100

    def __post_init__(self):
        algorithm = Algorithm(self.algorithm)
        object.__setattr__(self, 'algorithm', algorithm)
        defaults = ALGORITHM_DEFAULTS[algorithm]
        lp_mode = LpMode(self.lp_mode if self.lp_mode is not None else defaults['lp_mode'])
        object.__setattr__(self, 'lp_mode', lp_mode)
        if self.alpha_g is None:
            object.__setattr__(self, 'alpha_g', defaults['alpha_g'])
        object.__setattr__(self, 'e_clip', tuple(float(bound) for bound in self.e_clip))

        if algorithm == Algorithm.FLEX_F_DICE and lp_mode == LpMode.NEG_ESTIMATED_TD:
            raise ConfigError("flex_f_dice cannot use neg_estimated_td: e_phi does not depend on nu")
        for name in ('alpha_g', 'lr_nu', 'lr_critic', 'lr_policy', 'awr_temperature', 'reward_scale'):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ('batch_size', 'eval_interval', 'eval_episodes', 'eval_horizon'):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.steps < 0:
            raise ConfigError("steps cannot be negative")
        low, high = self.e_clip
        if not low < 0 < high:
            raise ConfigError(f"e_clip must bracket 0, got {self.e_clip}")
        if not np.all(self.flex.e_domain.contains(np.asarray(self.e_clip))):
            raise ConfigError(f"e_clip {self.e_clip} is not inside the domain {self.flex.e_domain}")
        if self.adaptive and not 0.0 < self.iota_b < 0.5:
            raise ConfigError(f"iota_b must lie in (0, 0.5), got {self.iota_b!r}")

    @property
    def divergence_label(self):
        if self.adaptive:
            flex = as_flex(self.flex)
            return f"adaptive:{flex.g_minus.name}:{flex.g_plus.name}"
        return self.flex.name


@dataclass(frozen=True, eq=False)
class TrainState:
    nu: np.ndarray
    critic: np.ndarray
    policy_logits: np.ndarray
    flex: object
    gamma: float
    adaptive: adaptive_params.AdaptiveState = None
    step: int = 0
    losses: tuple = (np.nan, np.nan, np.nan)
    e_hat: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass(frozen=True, eq=False)
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    def __len__(self):
        return self.states.size


def sample_batch(dataset, batch_size, rng):
    """Transitions drawn uniformly with replacement."""
    index = rng.integers(0, len(dataset), size=batch_size)
    return Batch(dataset.states[index], dataset.actions[index],
                 dataset.rewards[index], dataset.next_states[index])


def sample_initial(dataset, batch_size, rng):
    return rng.choice(dataset.initial_states, size=batch_size)


def initial_state(mdp, config):
    adaptive = None
    flex = config.flex
    if config.adaptive:
        adaptive = adaptive_params.initial_adaptive_state(
            mdp.n_states, mdp.n_actions,
            iota_b=config.iota_b, e_clip=config.e_clip, ema_decay=config.ema_decay,
        )
        flex = adaptive_params.recompose(adaptive, as_flex(flex).g_minus, as_flex(flex).g_plus)
    return TrainState(
        nu=np.zeros(mdp.n_states),
        critic=np.zeros((mdp.n_states, mdp.n_actions)),
        policy_logits=np.zeros((mdp.n_states, mdp.n_actions)),
        flex=flex,
        gamma=mdp.gamma,
        adaptive=adaptive,
    )


def perspective_weight(state, config):
    """
    alpha_g of the run. An adaptive run divides it by the larger estimated
    branch coefficient, so the estimates shape the two branches while neither
    is weighted more heavily than the base pair at alpha_g.
    """
    if state.adaptive is None:
        return config.alpha_g
    return config.alpha_g / max(state.flex.alpha_minus, state.flex.alpha_plus)


def _profile(state, config):
    return LossProfile(state.flex, config.lp_mode, perspective_weight(state, config), clip=config.clip_e)


def _scatter(shape, index, values):
    out = np.zeros(shape)
    np.add.at(out, index, values)
    return out


def nu_objective(nu, state, batch, init_states, config):
    """Mean regularized value objective of the batch at ``nu`` (other tables fixed)."""
    profile = _profile(state, config)
    if config.algorithm == Algorithm.FLEX_F_Q:
        e = state.critic[batch.states, batch.actions] - nu[batch.states]
    else:
        e = batch.rewards + state.gamma * nu[batch.next_states] - nu[batch.states]
    loss = np.mean(profile.value(e))
    if config.lp_mode == LpMode.INIT_DIST:
        loss += (1.0 - state.gamma) * np.mean(nu[init_states])
    elif config.lp_mode == LpMode.UNIFORM_VALUE:
        loss += (1.0 - state.gamma) * np.mean(nu[batch.states])
    return float(loss)


def nu_gradient(nu, state, batch, init_states, config):
    """
    Gradient of ``nu_objective``. For Flex-f-Q the critic is frozen, so this
    is the semi-gradient; for Flex-f-DICE it runs through both nu(s) and nu(s').
    """
    profile = _profile(state, config)
    n = len(batch)
    if config.algorithm == Algorithm.FLEX_F_Q:
        e = state.critic[batch.states, batch.actions] - nu[batch.states]
        grad = _scatter(nu.shape, batch.states, -profile.gradient(e)) / n
    else:
        e = batch.rewards + state.gamma * nu[batch.next_states] - nu[batch.states]
        slope = profile.gradient(e)
        grad = (_scatter(nu.shape, batch.next_states, state.gamma * slope)
                - _scatter(nu.shape, batch.states, slope)) / n
    if config.lp_mode == LpMode.INIT_DIST:
        grad += _scatter(nu.shape, init_states, np.full(init_states.size, 1.0 - state.gamma)) / init_states.size
    elif config.lp_mode == LpMode.UNIFORM_VALUE:
        grad += _scatter(nu.shape, batch.states, np.full(n, 1.0 - state.gamma)) / n
    return grad


def _awr_update(logits, batch, weights, lr):
    """Ascend the weighted log-likelihood of the batch actions."""
    log_probs = special.log_softmax(logits[batch.states], axis=1)
    loss = -float(np.mean(weights * log_probs[np.arange(len(batch)), batch.actions]))
    residual = np.exp(log_probs)
    residual[np.arange(len(batch)), batch.actions] -= 1.0
    grad = _scatter(logits.shape, batch.states, weights[:, None] * residual) / len(batch)
    return logits - lr * grad, loss


def step_flex_f_q(state, batch, config, init_states=None):
    n = len(batch)
    target = batch.rewards + state.gamma * state.nu[batch.next_states]
    q = state.critic[batch.states, batch.actions]
    loss_critic = 0.5 * float(np.mean((q - target) ** 2))
    critic = state.critic - config.lr_critic * _scatter(state.critic.shape, (batch.states, batch.actions), q - target) / n
    _require_finite("critic", critic, state.step + 1)

    e_hat = critic[batch.states, batch.actions] - state.nu[batch.states]
    current = replace(state, critic=critic)
    loss_nu = nu_objective(state.nu, current, batch, init_states, config)
    nu = state.nu - config.lr_nu * nu_gradient(state.nu, current, batch, init_states, config)

    weights = np.exp(np.minimum(config.awr_temperature * e_hat, AWR_EXP_CAP))
    logits, loss_policy = _awr_update(state.policy_logits, batch, weights, config.lr_policy)
    return replace(state, nu=nu, critic=critic, policy_logits=logits, step=state.step + 1,
                   losses=(loss_nu, loss_critic, loss_policy), e_hat=e_hat)


def step_flex_f_dice(state, batch, init_batch, config):
    n = len(batch)
    loss_nu = nu_objective(state.nu, state, batch, init_batch, config)
    nu = state.nu - config.lr_nu * nu_gradient(state.nu, state, batch, init_batch, config)
    _require_finite("nu", nu, state.step + 1)

    e_theta = batch.rewards + state.gamma * nu[batch.next_states] - nu[batch.states]
    e_phi = state.critic[batch.states, batch.actions]
    loss_critic = 0.5 * float(np.mean((e_phi - e_theta) ** 2))
    critic = state.critic - config.lr_critic * _scatter(state.critic.shape, (batch.states, batch.actions), e_phi - e_theta) / n

    e_hat = critic[batch.states, batch.actions]
    scaled = e_hat / perspective_weight(state, config)
    if config.clip_e:
        scaled = state.flex.e_domain.clip_interior(scaled)
    weights = np.maximum(0.0, state.flex.gstar_prime_inv(scaled))
    logits, loss_policy = _awr_update(state.policy_logits, batch, weights, config.lr_policy)
    return replace(state, nu=nu, critic=critic, policy_logits=logits, step=state.step + 1,
                   losses=(loss_nu, loss_critic, loss_policy), e_hat=e_hat)


def _adapt(state, batch):
    estimate = adaptive_params.bc_update(state.adaptive, batch.states, batch.actions)
    estimate = adaptive_params.estimate_alphas(estimate, batch.states, batch.actions, state.e_hat)
    estimate = adaptive_params.estimate_beta(estimate, state.flex, state.e_hat)
    flex = adaptive_params.recompose(estimate, state.flex.g_minus, state.flex.g_plus)
    return replace(state, adaptive=estimate, flex=flex)


def _require_finite(name, table, step):
    if not np.all(np.isfinite(table)):
        raise NanError(f"non-finite {name} at step {step}", step=step)


def _check_finite(state):
    tables = (state.nu, state.critic, state.policy_logits, np.asarray(state.losses))
    if not all(np.all(np.isfinite(table)) for table in tables):
        raise NanError(f"non-finite values after step {state.step} with {state.flex.name}", step=state.step)


def extract_policy(state, greedy=False):
    if greedy:
        return TabularPolicy.deterministic(np.argmax(state.policy_logits, axis=1), state.policy_logits.shape[1])
    return TabularPolicy.from_logits(state.policy_logits)


@dataclass(frozen=True)
class Evaluation:
    mean_return: float
    stderr: float
    exact_return: float
    normalized_return: float
    mc_normalized_return: float


def evaluate(mdp, policy, n_episodes, horizon, seed, bounds=None):
    """Monte-Carlo discounted returns next to the exact p0-averaged value."""
    bounds = bounds or return_bounds(mdp)
    runs = rollout(mdp, policy, n_episodes, horizon, np.random.default_rng(seed))
    returns = runs.rewards @ (mdp.gamma ** np.arange(horizon))
    stderr = float(np.std(returns, ddof=1) / np.sqrt(n_episodes)) if n_episodes > 1 else 0.0
    exact = float(mdp.p0 @ policy_value(mdp, policy))
    return Evaluation(
        mean_return=float(np.mean(returns)),
        stderr=stderr,
        exact_return=exact,
        normalized_return=bounds.normalize(exact),
        mc_normalized_return=bounds.normalize(float(np.mean(returns))),
    )


@dataclass(frozen=True)
class MetricRow:
    step: int
    loss_nu: float
    loss_critic: float
    loss_policy: float
    mean_e: float
    alpha_plus: float
    alpha_minus: float
    beta: float
    return_: float
    norm_return: float
    ema_cos: float
    ema_e: float

    FIELDS = ('step', 'loss_nu', 'loss_critic', 'loss_policy', 'mean_e', 'alpha_plus',
              'alpha_minus', 'beta', 'return', 'norm_return', 'ema_cos', 'ema_e')

    def as_row(self):
        values = (self.step, self.loss_nu, self.loss_critic, self.loss_policy, self.mean_e,
                  self.alpha_plus, self.alpha_minus, self.beta, self.return_, self.norm_return,
                  self.ema_cos, self.ema_e)
        return dict(zip(self.FIELDS, values))


def _flex_coefficients(flex):
    if isinstance(flex, FlexF):
        return flex.alpha_plus, flex.alpha_minus, flex.beta
    return 1.0, 1.0, 1.0


def train(mdp, dataset, config, progress=None):
    """
    Run ``config.steps`` updates; metrics hold interval-averaged losses and
    the exact return of the current softmax policy every ``eval_interval``.
    """
    dataset.check_consistent(mdp)
    data = dataset.scaled(config.reward_scale) if config.reward_scale != 1.0 else dataset
    rng = np.random.default_rng(config.seed)
    state = initial_state(mdp, config)
    bounds = return_bounds(mdp)
    needs_init = config.algorithm == Algorithm.FLEX_F_DICE or config.lp_mode == LpMode.INIT_DIST

    metrics = []
    totals = np.zeros(4)
    count = 0
    for _ in range(config.steps):
        batch = sample_batch(data, config.batch_size, rng)
        init_batch = sample_initial(data, config.batch_size, rng) if needs_init else None
        if config.algorithm == Algorithm.FLEX_F_Q:
            state = step_flex_f_q(state, batch, config, init_batch)
        else:
            state = step_flex_f_dice(state, batch, init_batch, config)
        _check_finite(state)
        if config.adaptive:
            state = _adapt(state, batch)
        totals += (*state.losses, float(np.mean(state.e_hat)))
        count += 1

        if state.step % config.eval_interval == 0 or state.step == config.steps:
            evaluation = evaluate(mdp, extract_policy(state), config.eval_episodes,
                                  config.eval_horizon, seed=[config.seed, state.step], bounds=bounds)
            loss_nu, loss_critic, loss_policy, mean_e = totals / count
            alpha_plus, alpha_minus, beta = _flex_coefficients(state.flex)
            row = MetricRow(
                step=state.step, loss_nu=loss_nu, loss_critic=loss_critic, loss_policy=loss_policy,
                mean_e=mean_e, alpha_plus=alpha_plus, alpha_minus=alpha_minus, beta=beta,
                return_=evaluation.exact_return, norm_return=evaluation.normalized_return,
                ema_cos=state.adaptive.ema_cos if state.adaptive else np.nan,
                ema_e=state.adaptive.ema_e if state.adaptive else np.nan,
            )
            metrics.append(row)
            logger.info("step %d: loss_nu %.4g, normalized return %.2f", row.step, loss_nu, row.norm_return)
            if progress is not None:
                progress(row)
            totals[:] = 0.0
            count = 0
    return state, metrics
