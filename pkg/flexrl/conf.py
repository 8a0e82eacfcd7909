"""
Settings access and the flat ``key = value`` config file format.

Values from ``settings.FLEXRL`` override ``DEFAULTS`` key by key; CLI flags
override config-file values.
"""
import os
from pathlib import Path

from django.conf import settings

from .exceptions import ConfigError

DEFAULTS = {
    'OUTPUT_ROOT': Path('runs'),
    'TRAIN_DEFAULTS': {
        'flex_f_q': {'lp_mode': 'neg_estimated_td', 'alpha_g': 1.0},
        'flex_f_dice': {'lp_mode': 'init_dist', 'alpha_g': 0.1},
    },
    'ADAPTIVE_DEFAULTS': {'iota_b': 0.3, 'e_clip': (-0.2, 0.15), 'ema_decay': 0.99},
    'CHECK_MAX_SIZE': 64,
    'DATASET_DEFAULTS': {'n_trajectories': 100, 'horizon': 50, 'gamma': 0.9, 'noise': 0.1},
}


def flexrl_setting(name):
    configured = getattr(settings, 'FLEXRL', {})
    if name not in DEFAULTS and name not in configured:
        raise ConfigError(f"unknown flexrl setting {name!r}")
    value = configured.get(name, DEFAULTS.get(name))
    if isinstance(value, dict) and isinstance(DEFAULTS.get(name), dict):
        return {**DEFAULTS[name], **value}
    return value


def output_root():
    """FLEXRL_OUT wins over the configured root, so it can be changed per process."""
    return Path(os.environ.get('FLEXRL_OUT') or flexrl_setting('OUTPUT_ROOT'))


def read_config_file(path):
    values = {}
    try:
        with open(path) as handle:
            lines = handle.readlines()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    for number, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {raw.strip()!r}")
        values[key.strip().replace('-', '_')] = value.strip()
    return values


def merge_options(file_values, cli_values):
    """Config-file values overlaid by every CLI value that was actually given."""
    merged = dict(file_values)
    merged.update({key: value for key, value in cli_values.items() if value is not None})
    return merged
