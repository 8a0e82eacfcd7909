"""Closed-form value losses that particular flexible divergences must reproduce."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .divergences import CATALOG, LossProfile, LpMode, preset
from .exceptions import InvalidCoefficient, UnknownPreset

IQL_TAUS = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass(frozen=True)
class ReferenceLoss:
    name: str
    tau: float = None

    def __post_init__(self):
        if self.name not in ('xql', 'iql', 'mse'):
            raise UnknownPreset(f"no reference loss named {self.name!r}")
        if self.name == 'iql' and not (self.tau is not None and 0.0 < self.tau < 1.0):
            raise InvalidCoefficient(f"iql needs tau in (0, 1), got {self.tau!r}")

    def __str__(self):
        return f"iql({self.tau:g})" if self.name == 'iql' else self.name


def reference_loss(ref, e):
    e = np.asarray(e, dtype=float)
    if ref.name == 'xql':
        loss = np.expm1(e) - e
    elif ref.name == 'iql':
        loss = np.where(e >= 0, ref.tau, 1.0 - ref.tau) * 0.5 * e ** 2
    else:
        loss = 0.5 * e ** 2
    return float(loss) if loss.ndim == 0 else loss


def verify_equivalence(ref, flex, grid=(-2.0, 2.0), n_points=401):
    """Largest pointwise gap between ``ref`` and the -e + g(e) loss of ``flex``."""
    e = np.linspace(grid[0], grid[1], n_points)
    profile = LossProfile(flex, LpMode.NEG_TD_ERROR)
    return float(np.max(np.abs(reference_loss(ref, e) - profile.value(e))))


def matched_pairs():
    """(reference, divergence, grid) triples that must agree."""
    pairs = [(ReferenceLoss('xql'), preset('xql'), (-2.0, 2.0))]
    pairs += [(ReferenceLoss('iql', tau), preset('iql', tau=tau), (-3.0, 3.0)) for tau in IQL_TAUS]
    pairs.append((ReferenceLoss('mse'), CATALOG['chi2'], (-5.0, 5.0)))
    return pairs
