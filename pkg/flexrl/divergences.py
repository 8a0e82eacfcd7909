"""
Closed-form f-divergence generators and the flexible two-branch composition.

Every catalog generator g*(zeta) is normalized so that g*(1) = 0 and
g*'(1) = 0. Its Fenchel conjugate g(e) turns the regularized dual into a loss
on the TD error e, and g*'^-1(e) recovers the optimal density ratio.

All evaluators accept scalars or numpy arrays and return the same kind.
"""
from __future__ import annotations

import functools
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from django.db import models
from scipy import special

from .exceptions import (
    DomainError, InvalidCoefficient, InvalidThreshold, NonInvertible, UnknownPreset,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Interval:
    """A real interval with open or closed endpoints."""
    lower: float = -math.inf
    upper: float = math.inf
    lower_closed: bool = False
    upper_closed: bool = False

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        above = x >= self.lower if self.lower_closed else x > self.lower
        below = x <= self.upper if self.upper_closed else x < self.upper
        return above & below

    def interior(self, x):
        x = np.asarray(x, dtype=float)
        return (x > self.lower) & (x < self.upper)

    def require(self, x, what, interior=False):
        inside = self.interior(x) if interior else self.contains(x)
        if not np.all(inside):
            offending = float(np.atleast_1d(np.asarray(x, dtype=float))[~np.atleast_1d(inside)][0])
            where = 'interior of ' if interior else ''
            raise DomainError(f"{what}={offending!r} is outside the {where}domain {self}")

    def clip(self, x, margin=1e-9):
        """Clamp into the interval; open endpoints are approached within ``margin``."""
        lower, upper = self.lower, self.upper
        if math.isfinite(lower) and not self.lower_closed:
            lower += margin * max(1.0, abs(lower))
        if math.isfinite(upper) and not self.upper_closed:
            upper -= margin * max(1.0, abs(upper))
        return np.clip(x, lower, upper)

    def clip_interior(self, x, margin=1e-9):
        lower = self.lower + margin * max(1.0, abs(self.lower)) if math.isfinite(self.lower) else self.lower
        upper = self.upper - margin * max(1.0, abs(self.upper)) if math.isfinite(self.upper) else self.upper
        return np.clip(x, lower, upper)

    def __str__(self):
        left = '[' if self.lower_closed else '('
        right = ']' if self.upper_closed else ')'
        return f"{left}{self.lower:g}, {self.upper:g}{right}"


def _as_output(values, like):
    values = np.asarray(values, dtype=float).reshape(np.shape(like))
    return float(values) if values.ndim == 0 else values


@dataclass(frozen=True)
class DivergenceFn:
    """
    A base generator g* together with its conjugate, derivative, inverse
    derivative and curvature, each a vectorized closed form.
    """
    name: str
    zeta_domain: Interval
    e_domain: Interval
    fn_gstar: Callable = field(repr=False, compare=False)
    fn_conjugate: Callable = field(repr=False, compare=False)
    fn_prime: Callable = field(repr=False, compare=False)
    fn_prime_inv: Callable = field(repr=False, compare=False)
    fn_second: Callable = field(repr=False, compare=False)

    @property
    def label(self):
        return self.name

    def gstar(self, zeta):
        z = np.asarray(zeta, dtype=float)
        self.zeta_domain.require(z, f"{self.name} zeta")
        return _as_output(self.fn_gstar(z), zeta)

    def conjugate(self, e):
        x = np.asarray(e, dtype=float)
        self.e_domain.require(x, f"{self.name} e")
        return _as_output(self.fn_conjugate(x), e)

    def gstar_prime(self, zeta):
        z = np.asarray(zeta, dtype=float)
        self.zeta_domain.require(z, f"{self.name} zeta", interior=True)
        return _as_output(self.fn_prime(z), zeta)

    def gstar_prime_inv(self, e):
        x = np.asarray(e, dtype=float)
        self.e_domain.require(x, f"{self.name} e", interior=True)
        return _as_output(self.fn_prime_inv(x), e)

    def gstar_second(self, zeta):
        z = np.asarray(zeta, dtype=float)
        self.zeta_domain.require(z, f"{self.name} zeta", interior=True)
        return _as_output(self.fn_second(z), zeta)

    def conjugate_prime(self, e):
        return self.gstar_prime_inv(e)

    def conjugate_second(self, e):
        x = np.asarray(e, dtype=float)
        self.e_domain.require(x, f"{self.name} e", interior=True)
        return _as_output(1.0 / self.fn_second(self.fn_prime_inv(x)), e)


# Table of generators adjusted so that g*(1) = 0 and g*'(1) = 0.

def _chi2_gstar(z):
    return 0.5 * (z - 1.0) ** 2


def _chi2_conjugate(e):
    return 0.5 * e ** 2 + e


def _chi2_prime(z):
    return z - 1.0


def _chi2_prime_inv(e):
    return e + 1.0


def _chi2_second(z):
    return np.ones_like(z)


def _kl_gstar(z):
    return special.xlogy(z, z) - z + 1.0


def _kl_conjugate(e):
    return np.expm1(e)


def _kl_prime(z):
    return np.log(z)


def _kl_prime_inv(e):
    return np.exp(e)


def _kl_second(z):
    return 1.0 / z


def _reverse_kl_gstar(z):
    return -np.log(z) + z - 1.0


def _reverse_kl_conjugate(e):
    return -np.log1p(-e)


def _reverse_kl_prime(z):
    return 1.0 - 1.0 / z


def _reverse_kl_prime_inv(e):
    return 1.0 / (1.0 - e)


def _reverse_kl_second(z):
    return 1.0 / z ** 2


def _hellinger_gstar(z):
    return 0.5 * (np.sqrt(z) - 1.0) ** 2


def _hellinger_conjugate(e):
    return e / (1.0 - 2.0 * e)


def _hellinger_prime(z):
    return 0.5 * (np.sqrt(z) - 1.0) / np.sqrt(z)


def _hellinger_prime_inv(e):
    return (1.0 / (1.0 - 2.0 * e)) ** 2


def _hellinger_second(z):
    return 0.25 * z ** -1.5


def _le_cam_gstar(z):
    return (1.0 - z) / (2.0 * (z + 1.0)) + (z - 1.0) / 4.0


def _le_cam_conjugate(e):
    return -np.sqrt(1.0 - 4.0 * e) - e + 1.0


def _le_cam_prime(z):
    return -1.0 / (z + 1.0) ** 2 + 0.25


def _le_cam_prime_inv(e):
    return np.sqrt(4.0 / (1.0 - 4.0 * e)) - 1.0


def _le_cam_second(z):
    return 2.0 / (z + 1.0) ** 3


CATALOG = {
    'chi2': DivergenceFn(
        name='chi2',
        zeta_domain=Interval(),
        e_domain=Interval(),
        fn_gstar=_chi2_gstar, fn_conjugate=_chi2_conjugate,
        fn_prime=_chi2_prime, fn_prime_inv=_chi2_prime_inv, fn_second=_chi2_second,
    ),
    'kl': DivergenceFn(
        name='kl',
        zeta_domain=Interval(0.0, math.inf, lower_closed=True),
        e_domain=Interval(),
        fn_gstar=_kl_gstar, fn_conjugate=_kl_conjugate,
        fn_prime=_kl_prime, fn_prime_inv=_kl_prime_inv, fn_second=_kl_second,
    ),
    'reverse_kl': DivergenceFn(
        name='reverse_kl',
        zeta_domain=Interval(0.0, math.inf),
        e_domain=Interval(-math.inf, 1.0),
        fn_gstar=_reverse_kl_gstar, fn_conjugate=_reverse_kl_conjugate,
        fn_prime=_reverse_kl_prime, fn_prime_inv=_reverse_kl_prime_inv,
        fn_second=_reverse_kl_second,
    ),
    'hellinger': DivergenceFn(
        name='hellinger',
        zeta_domain=Interval(0.0, math.inf, lower_closed=True),
        e_domain=Interval(-math.inf, 0.5),
        fn_gstar=_hellinger_gstar, fn_conjugate=_hellinger_conjugate,
        fn_prime=_hellinger_prime, fn_prime_inv=_hellinger_prime_inv,
        fn_second=_hellinger_second,
    ),
    'le_cam': DivergenceFn(
        name='le_cam',
        zeta_domain=Interval(-1.0, math.inf),
        e_domain=Interval(-math.inf, 0.25, upper_closed=True),
        fn_gstar=_le_cam_gstar, fn_conjugate=_le_cam_conjugate,
        fn_prime=_le_cam_prime, fn_prime_inv=_le_cam_prime_inv, fn_second=_le_cam_second,
    ),
}


def get_divergence(name):
    key = name.strip().lower().replace('-', '_')
    try:
        return CATALOG[key]
    except KeyError:
        raise UnknownPreset(f"unknown divergence {name!r}; choose from {sorted(CATALOG)}") from None


@dataclass(frozen=True)
class FlexF:
    """
    Two scaled generators joined at beta with a linear correction on one side.

    The correction k_g * zeta + C_g is subtracted from the lower branch when
    beta < 1 and added to the upper branch otherwise, so the branch holding
    zeta = 1 keeps its f-divergence form.
    """
    g_minus: DivergenceFn
    g_plus: DivergenceFn
    alpha_minus: float
    alpha_plus: float
    beta: float
    k_g: float
    C_g: float
    beta_e: float
    label: str = field(default='', compare=False)

    @property
    def name(self):
        if self.label:
            return self.label
        return (f"{self.g_minus.name}:{self.g_plus.name}"
                f"(a-={self.alpha_minus:.6g},a+={self.alpha_plus:.6g},b={self.beta:.6g})")

    @property
    def lower_corrected(self):
        return self.beta < 1.0

    @property
    def upper_corrected(self):
        return self.beta >= 1.0

    @property
    def zeta_domain(self):
        lower, upper = self.g_minus.zeta_domain, self.g_plus.zeta_domain
        return Interval(lower.lower, upper.upper, lower.lower_closed, upper.upper_closed)

    @property
    def e_domain(self):
        lower, upper = self.g_minus.e_domain, self.g_plus.e_domain
        low_shift = self.k_g if self.lower_corrected else 0.0
        high_shift = self.k_g if self.upper_corrected else 0.0
        return Interval(
            self.alpha_minus * lower.lower - low_shift,
            self.alpha_plus * upper.upper + high_shift,
            lower.lower_closed,
            upper.upper_closed,
        )

    def _low_k(self):
        return self.k_g if self.lower_corrected else 0.0

    def _low_c(self):
        return self.C_g if self.lower_corrected else 0.0

    def _high_k(self):
        return self.k_g if self.upper_corrected else 0.0

    def _high_c(self):
        return self.C_g if self.upper_corrected else 0.0

    # One-sided branch expressions, unguarded; the join checks compare them at beta.

    def lower_gstar(self, zeta):
        z = np.asarray(zeta, dtype=float)
        return self.alpha_minus * self.g_minus.fn_gstar(z) - (self._low_k() * z + self._low_c())

    def upper_gstar(self, zeta):
        z = np.asarray(zeta, dtype=float)
        return self.alpha_plus * self.g_plus.fn_gstar(z) + (self._high_k() * z + self._high_c())

    def lower_gstar_prime(self, zeta):
        z = np.asarray(zeta, dtype=float)
        return self.alpha_minus * self.g_minus.fn_prime(z) - self._low_k()

    def upper_gstar_prime(self, zeta):
        z = np.asarray(zeta, dtype=float)
        return self.alpha_plus * self.g_plus.fn_prime(z) + self._high_k()

    def _by_zeta(self, zeta, lower_fn, upper_fn, interior):
        z = np.atleast_1d(np.asarray(zeta, dtype=float))
        self.zeta_domain.require(z, f"{self.name} zeta", interior=interior)
        out = np.empty(z.shape)
        below = z < self.beta
        out[below] = lower_fn(z[below])
        out[~below] = upper_fn(z[~below])
        return _as_output(out, zeta)

    def _by_e(self, e, lower_fn, upper_fn, interior):
        x = np.atleast_1d(np.asarray(e, dtype=float))
        self.e_domain.require(x, f"{self.name} e", interior=interior)
        out = np.empty(x.shape)
        below = x < self.beta_e
        out[below] = lower_fn((x[below] + self._low_k()) / self.alpha_minus)
        out[~below] = upper_fn((x[~below] - self._high_k()) / self.alpha_plus)
        return _as_output(out, e)

    def gstar(self, zeta):
        return self._by_zeta(zeta, self.lower_gstar, self.upper_gstar, interior=False)

    def gstar_prime(self, zeta):
        return self._by_zeta(zeta, self.lower_gstar_prime, self.upper_gstar_prime, interior=True)

    def gstar_second(self, zeta):
        return self._by_zeta(
            zeta,
            lambda z: self.alpha_minus * self.g_minus.fn_second(z),
            lambda z: self.alpha_plus * self.g_plus.fn_second(z),
            interior=True,
        )

    def conjugate(self, e):
        # e * zeta* - g*(zeta*) per branch, written through the base conjugate
        # so the closed endpoint of a bounded conjugate stays finite.
        return self._by_e(
            e,
            lambda u: self.alpha_minus * self.g_minus.fn_conjugate(u) + self._low_c(),
            lambda u: self.alpha_plus * self.g_plus.fn_conjugate(u) - self._high_c(),
            interior=False,
        )

    def gstar_prime_inv(self, e):
        return self._by_e(e, self.g_minus.fn_prime_inv, self.g_plus.fn_prime_inv, interior=True)

    def conjugate_prime(self, e):
        return self.gstar_prime_inv(e)

    def conjugate_second(self, e):
        return self._by_e(
            e,
            lambda u: 1.0 / (self.alpha_minus * self.g_minus.fn_second(self.g_minus.fn_prime_inv(u))),
            lambda u: 1.0 / (self.alpha_plus * self.g_plus.fn_second(self.g_plus.fn_prime_inv(u))),
            interior=True,
        )


Divergence = Union[DivergenceFn, FlexF]


@functools.lru_cache(maxsize=None)
def _require_invertible(fn):
    domain = fn.zeta_domain
    low = max(domain.lower, -50.0) + 1e-6
    high = min(domain.upper, 50.0)
    grid = np.linspace(low, high, 513)
    with np.errstate(all='ignore'):
        slopes = fn.fn_prime(grid)
    if not (np.all(np.isfinite(slopes)) and np.all(np.diff(slopes) > 0)):
        raise NonInvertible(f"derivative of {fn.name} is not strictly increasing on {domain}")
    return True


def compose_flex(g_minus, g_plus, alpha_minus, alpha_plus, beta, label=''):
    """Join alpha_minus * g_minus (zeta < beta) and alpha_plus * g_plus (zeta >= beta)."""
    alpha_minus, alpha_plus, beta = float(alpha_minus), float(alpha_plus), float(beta)
    for alpha in (alpha_minus, alpha_plus):
        if not (math.isfinite(alpha) and alpha > 0):
            raise InvalidCoefficient(f"branch coefficients must be positive, got {alpha!r}")
    for branch in (g_minus, g_plus):
        if not (math.isfinite(beta) and branch.zeta_domain.interior(beta)):
            raise InvalidThreshold(
                f"beta={beta!r} is not inside the interior of {branch.name}'s domain {branch.zeta_domain}"
            )
        _require_invertible(branch)

    slope_minus = alpha_minus * float(g_minus.fn_prime(beta))
    slope_plus = alpha_plus * float(g_plus.fn_prime(beta))
    k_g = slope_minus - slope_plus
    C_g = alpha_minus * float(g_minus.fn_gstar(beta)) - alpha_plus * float(g_plus.fn_gstar(beta)) - beta * k_g
    beta_e = slope_minus if beta >= 1.0 else slope_plus
    return FlexF(
        g_minus=g_minus, g_plus=g_plus,
        alpha_minus=alpha_minus, alpha_plus=alpha_plus, beta=beta,
        k_g=k_g, C_g=C_g, beta_e=beta_e, label=label,
    )


_PRESET_PATTERN = re.compile(r'^(?P<name>[a-z0-9_\-]+?)(?:\((?P<arg>[^)]*)\))?$')


def preset(name, tau=0.7, epsilon=0.5):
    """
    Named special cases: soft_chi2 (OptiDICE), relax_dice, iql(tau) expectile,
    porel_dice(epsilon), and xql. A parenthesized argument overrides tau/epsilon.
    """
    match = _PRESET_PATTERN.match(name.strip().lower())
    if match is None:
        raise UnknownPreset(f"unknown preset {name!r}")
    key = match.group('name').replace('-', '_')
    if match.group('arg'):
        try:
            value = float(match.group('arg'))
        except ValueError:
            raise UnknownPreset(f"cannot read the argument of preset {name!r}") from None
        tau = epsilon = value

    chi2, kl, le_cam = CATALOG['chi2'], CATALOG['kl'], CATALOG['le_cam']
    if key == 'iql':
        if not 0.0 < tau < 1.0:
            raise InvalidCoefficient(f"expectile tau must lie in (0, 1), got {tau!r}")
        return compose_flex(chi2, chi2, 1.0 / (1.0 - tau), 1.0 / tau, 1.0, label=f"iql({tau:g})")
    if key == 'soft_chi2':
        return compose_flex(kl, chi2, 1.0, 1.0, 1.0, label='soft_chi2')
    if key == 'relax_dice':
        return compose_flex(kl, kl, 1.0, 2.0, 1.0, label='relax_dice')
    if key == 'xql':
        return compose_flex(kl, kl, 1.0, 1.0, 1.0, label='xql')
    if key == 'porel_dice':
        return compose_flex(le_cam, chi2, epsilon, 1.0, 1.0, label=f"porel_dice({epsilon:g})")
    raise UnknownPreset(
        f"unknown preset {name!r}; choose from soft_chi2, relax_dice, iql, porel_dice, xql"
    )


def parse_divergence(spec, alpha_minus=1.0, alpha_plus=1.0, beta=1.0):
    """
    Read the CLI form of a divergence: a catalog name (``chi2``), a pair of
    bases (``le_cam:chi2``) composed with the given coefficients, or a preset.
    """
    text = spec.strip().lower()
    if ':' in text:
        lower, upper = text.split(':', 1)
        return compose_flex(get_divergence(lower), get_divergence(upper), alpha_minus, alpha_plus, beta)
    if text.replace('-', '_') in CATALOG:
        return get_divergence(text)
    return preset(text)


def as_flex(f):
    """View a base generator as the trivial composition of itself with itself."""
    if isinstance(f, FlexF):
        return f
    return compose_flex(f, f, 1.0, 1.0, 1.0, label=f.name)


def eval_gstar(f, zeta):
    return f.gstar(zeta)


def eval_g(f, e):
    return f.conjugate(e)


def eval_gstar_prime(f, zeta):
    return f.gstar_prime(zeta)


def eval_gstar_prime_inv(f, e):
    return f.gstar_prime_inv(e)


def eval_gstar_second(f, zeta):
    return f.gstar_second(zeta)


def eval_g_prime(f, e):
    return f.conjugate_prime(e)


def eval_g_second(f, e):
    return f.conjugate_second(e)


class LpMode(models.TextChoices):
    INIT_DIST = 'init_dist', 'Initial distribution (1-gamma) p0 nu'
    UNIFORM_VALUE = 'uniform_value', 'Uniform value (1-gamma) nu'
    NEG_TD_ERROR = 'neg_td_error', 'Negative TD error -e_theta'
    NEG_ESTIMATED_TD = 'neg_estimated_td', 'Negative estimated TD error -e_hat'

    @property
    def folds_td_error(self):
        return self in (LpMode.NEG_TD_ERROR, LpMode.NEG_ESTIMATED_TD)


@dataclass(frozen=True)
class LossProfile:
    """
    The per-sample Bellman loss induced by a divergence.

    The conjugate is applied with the perspective weighting
    alpha_g * g(e / alpha_g); the -e term is included only for the TD-error
    choices of L_P, the other choices are assembled by the caller.
    """
    source: Divergence
    lp_mode: LpMode = LpMode.NEG_TD_ERROR
    alpha_g: float = 1.0
    clip: bool = False

    def __post_init__(self):
        if not self.alpha_g > 0:
            raise InvalidCoefficient(f"alpha_g must be positive, got {self.alpha_g!r}")

    def _scaled(self, e, interior):
        u = np.asarray(e, dtype=float) / self.alpha_g
        if self.clip:
            domain = self.source.e_domain
            clipped = domain.clip_interior(u) if interior else domain.clip(u)
            if not np.array_equal(clipped, u):
                logger.debug("clipped %d TD errors into %s", int(np.sum(clipped != u)), domain)
            u = clipped
        return u

    def value(self, e):
        loss = self.alpha_g * np.asarray(self.source.conjugate(self._scaled(e, interior=False)))
        if LpMode(self.lp_mode).folds_td_error:
            loss = loss - np.asarray(e, dtype=float)
        return _as_output(loss, e)

    def gradient(self, e):
        slope = np.asarray(self.source.conjugate_prime(self._scaled(e, interior=True)))
        if LpMode(self.lp_mode).folds_td_error:
            slope = slope - 1.0
        return _as_output(slope, e)

    def curvature(self, e):
        second = np.asarray(self.source.conjugate_second(self._scaled(e, interior=True))) / self.alpha_g
        return _as_output(second, e)


def bellman_loss(profile, e):
    return profile.value(e)
