"""
On-line estimation of the branch coefficients alpha+/- and the threshold beta.

A behavior-cloning policy pi_b is fit on the same batches as the main run.
The cosine between (pi_b(a_i|s_i))_i and (exp(e_i))_i sets
alpha+ = 1/cos and alpha- = 1/(1 - cos); beta is the ratio the beta = 0
placeholder composition assigns to the smoothed mean TD error.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .divergences import compose_flex
from .exceptions import DegenerateVector, DomainError, InvalidThreshold

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AdaptiveState:
    bc_logits: np.ndarray
    ema_cos: float = 0.5
    ema_e: float = 0.0
    iota_b: float = 0.3
    e_clip: tuple = (-0.2, 0.15)
    ema_decay: float = 0.99
    bc_lr: float = 1.0
    alpha_plus: float = 1.0
    alpha_minus: float = 1.0
    beta: float = 1.0
    degenerate: bool = False

    def behavior_policy(self):
        return special.softmax(self.bc_logits, axis=1)


def initial_adaptive_state(n_states, n_actions, **settings):
    return AdaptiveState(bc_logits=np.zeros((n_states, n_actions)), **settings)


def ema(previous, observation, decay):
    return decay * previous + (1.0 - decay) * observation


def clamp_cosine(cos, iota_b):
    return min(max(cos, iota_b), 1.0 - iota_b)


def bc_update(state, states, actions):
    """One maximum-likelihood step on the behavior-cloning logits."""
    states = np.asarray(states, dtype=int)
    actions = np.asarray(actions, dtype=int)
    if states.size == 0:
        return state
    probs = special.softmax(state.bc_logits[states], axis=1)
    probs[np.arange(states.size), actions] -= 1.0
    grad = np.zeros_like(state.bc_logits)
    np.add.at(grad, states, probs)
    return replace(state, bc_logits=state.bc_logits - state.bc_lr * grad / states.size)


def _clipped(state, e_hat):
    low, high = state.e_clip
    return np.clip(np.asarray(e_hat, dtype=float), low, high)


def cosine_similarity(x, y):
    norm_x, norm_y = np.linalg.norm(x), np.linalg.norm(y)
    if norm_x == 0.0 or norm_y == 0.0:
        raise DegenerateVector("cosine similarity is undefined for a zero vector")
    return float(x @ y / (norm_x * norm_y))


def estimate_alphas(state, states, actions, e_hat):
    pi_b = state.behavior_policy()[np.asarray(states, dtype=int), np.asarray(actions, dtype=int)]
    weights = np.exp(_clipped(state, e_hat))
    try:
        cos = cosine_similarity(pi_b, weights)
    except DegenerateVector as err:
        logger.warning("skipping alpha estimation: %s", err)
        return replace(state, degenerate=True)
    ema_cos = ema(state.ema_cos, cos, state.ema_decay)
    clamped = clamp_cosine(ema_cos, state.iota_b)
    return replace(
        state,
        ema_cos=ema_cos,
        alpha_plus=1.0 / clamped,
        alpha_minus=1.0 / (1.0 - clamped),
        degenerate=False,
    )


def placeholder_inverse(g_minus, g_plus, alpha_minus, alpha_plus, e_bar):
    """g*'^-1 of the beta = 0 composition at ``e_bar``."""
    try:
        placeholder = compose_flex(g_minus, g_plus, alpha_minus, alpha_plus, 0.0)
    except InvalidThreshold:
        # 0 sits on the domain boundary; for nonnegative ratios the
        # composition is the uncorrected upper branch
        return float(g_plus.gstar_prime_inv(e_bar / alpha_plus))
    return float(placeholder.gstar_prime_inv(e_bar))


def estimate_beta(state, flex, e_hat):
    e_hat = _clipped(state, e_hat)
    if e_hat.size == 0:
        return state
    ema_e = ema(state.ema_e, float(e_hat.mean()), state.ema_decay)
    e_bar = float(np.clip(ema_e, *state.e_clip))
    beta = placeholder_inverse(flex.g_minus, flex.g_plus, state.alpha_minus, state.alpha_plus, e_bar)
    for branch in (flex.g_minus, flex.g_plus):
        if not (beta > 0 and branch.zeta_domain.interior(beta)):
            raise DomainError(f"estimated beta={beta!r} falls outside {branch.name}'s domain")
    return replace(state, ema_e=ema_e, beta=beta)


def recompose(state, g_minus, g_plus):
    return compose_flex(g_minus, g_plus, state.alpha_minus, state.alpha_plus, state.beta)
