"""SVG line plots of divergence functions and of alpha+/-, beta traces."""
from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use('Agg')

import numpy as np  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .divergences import FlexF, LossProfile, LpMode  # noqa: E402

logger = logging.getLogger(__name__)

SVG_RC = {'svg.fonttype': 'none', 'svg.hashsalt': 'flexrl'}


def _e_range(domain, low=-2.0, high=2.0, n_points=400, interior=False):
    top = min(high, domain.upper)
    e = np.linspace(low, top, n_points)
    keep = domain.interior(e) if interior else domain.contains(e)
    return e[keep]


def function_curves(f, n_points=400):
    """
    The curves of the function figure, each an (x, y) pair: g*, g*'^-1, g and
    the loss -e + g(e) of ``f``, plus the conjugates of its two bases on their
    own domains.
    """
    zeta_low = max(f.zeta_domain.lower, -0.9)
    zeta = np.linspace(zeta_low, 3.0, n_points)
    zeta = zeta[f.zeta_domain.contains(zeta)]
    e_value = _e_range(f.e_domain, n_points=n_points)
    e_slope = _e_range(f.e_domain, n_points=n_points, interior=True)
    loss = LossProfile(f, LpMode.NEG_TD_ERROR)
    curves = {
        'gstar': (zeta, f.gstar(zeta)),
        'gstar_prime_inv': (e_slope, f.gstar_prime_inv(e_slope)),
        'conjugate': (e_value, f.conjugate(e_value)),
        'loss': (e_value, loss.value(e_value)),
    }
    if isinstance(f, FlexF):
        for key, base in (('base_minus', f.g_minus), ('base_plus', f.g_plus)):
            e_base = _e_range(base.e_domain, n_points=n_points)
            curves[key] = (e_base, base.conjugate(e_base))
    return curves


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(path, format='svg', metadata={'Date': None})
    logger.info("wrote %s", path)
    return path


def render_function(f, path):
    curves = function_curves(f)
    fig = Figure(figsize=(10, 8))
    axes = fig.subplots(2, 2)
    panels = (
        (axes[0, 0], 'gstar', 'zeta', 'g*(zeta)'),
        (axes[0, 1], 'gstar_prime_inv', 'e', "g*'^-1(e)"),
        (axes[1, 0], 'conjugate', 'e', 'g(e)'),
        (axes[1, 1], 'loss', 'e', '-e + g(e)'),
    )
    for ax, key, xlabel, ylabel in panels:
        x, y = curves[key]
        ax.plot(x, y, color='#1f77b4', label=f.name)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
    ax = axes[1, 0]
    for key, style in (('base_minus', '--'), ('base_plus', ':')):
        if key in curves:
            x, y = curves[key]
            base = f.g_minus if key == 'base_minus' else f.g_plus
            ax.plot(x, y, linestyle=style, color='#7f7f7f', label=f"{base.name} ({key.split('_')[1]})")
    if isinstance(f, FlexF):
        axes[0, 0].axvline(f.beta, color='#d62728', linewidth=0.8, label='beta')
        axes[0, 1].axvline(f.beta_e, color='#d62728', linewidth=0.8, label='beta_e')
    for ax in axes.flat:
        ax.legend(loc='best', fontsize='small')
    fig.suptitle(f.name)
    fig.tight_layout()
    return _save(fig, path)


def trace_curves(metrics):
    steps = np.array([row['step'] for row in metrics], dtype=float)
    return {key: (steps, np.array([row[key] for row in metrics], dtype=float))
            for key in ('alpha_plus', 'alpha_minus', 'beta')}


def render_traces(metrics, path, title='alpha and beta during training'):
    curves = trace_curves(metrics)
    fig = Figure(figsize=(8, 4))
    ax = fig.subplots()
    for key, color in (('alpha_plus', '#1f77b4'), ('alpha_minus', '#ff7f0e'), ('beta', '#2ca02c')):
        ax.plot(*curves[key], color=color, label=key)
    ax.set_xlabel('step')
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc='best')
    fig.tight_layout()
    return _save(fig, path)
