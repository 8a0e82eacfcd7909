"""
Plain-text file formats: datasets (.csv/.init/.meta), metrics CSV,
checkpoints, the oracle report and the results table.

Reals are written with 17 significant digits so files round-trip exactly.
Nothing here writes timestamps.
"""
from __future__ import annotations

import csv
import logging
import re
from pathlib import Path

import numpy as np

from .exceptions import DatasetFormatError
from .mdp import BehaviorComponent, OfflineDataset
from .trainers import MetricRow

logger = logging.getLogger(__name__)

DATASET_HEADER = ('s', 'a', 'r', 's_next', 'done')
ORACLE_COLUMNS = ('instance', 'divergence', 'alpha_g', 'primal', 'dual', 'gap', 'iterations')
RESULT_COLUMNS = ('env', 'mixture', 'algorithm', 'divergence', 'seed', 'final_norm_return',
                  'mean_norm_return', 'std_norm_return')
CHECKPOINT_SECTIONS = ('nu', 'critic', 'policy_logits', 'adaptive')


def fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def slug(text):
    return re.sub(r'[^a-z0-9._+-]+', '-', str(text).lower()).strip('-')


def dataset_base(root, env, mixture, seed):
    return Path(root) / 'datasets' / f"{env}_{mixture}_s{seed}"


def run_dir(root, env, mixture, algorithm, divergence):
    return Path(root) / 'runs' / env / mixture / algorithm / slug(divergence)


def write_meta(path, values):
    with open(path, 'w', newline='\n') as handle:
        for key, value in values.items():
            handle.write(f"{key}={fmt(value)}\n")


def read_meta(path):
    values = {}
    try:
        with open(path) as handle:
            for number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line or line.startswith('#'):
                    continue
                if '=' not in line:
                    raise DatasetFormatError(f"{path}:{number}: expected key=value, got {line!r}")
                key, value = line.split('=', 1)
                values[key.strip()] = value.strip()
    except OSError as err:
        raise DatasetFormatError(f"cannot read {path}: {err}") from err
    return values


def write_dataset(dataset, base, meta):
    """Write ``<base>.csv``, ``<base>.init`` and ``<base>.meta``; returns the three paths."""
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path, init_path, meta_path = (base.with_suffix(suffix) for suffix in ('.csv', '.init', '.meta'))

    with open(csv_path, 'w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(DATASET_HEADER)
        for row in dataset.transitions():
            writer.writerow((row.s, row.a, fmt(row.r), row.s_next, int(row.done)))
    with open(init_path, 'w', newline='\n') as handle:
        handle.writelines(f"{int(state)}\n" for state in dataset.initial_states)

    values = dict(meta)
    values.update(mixture=dataset.mixture_label, n_states=dataset.n_states, n_actions=dataset.n_actions)
    for index, component in enumerate(dataset.components):
        for name in ('label', 'target', 'achieved', 'temperature', 'n_trajectories'):
            values[f"component.{index}.{name}"] = getattr(component, name)
    write_meta(meta_path, values)
    logger.info("wrote %d transitions to %s", len(dataset), csv_path)
    return csv_path, init_path, meta_path


def _components(meta):
    indices = sorted({int(key.split('.')[1]) for key in meta if key.startswith('component.')})
    components = []
    for index in indices:
        prefix = f"component.{index}."
        try:
            components.append(BehaviorComponent(
                label=meta[prefix + 'label'],
                target=float(meta[prefix + 'target']),
                achieved=float(meta[prefix + 'achieved']),
                temperature=float(meta[prefix + 'temperature']),
                n_trajectories=int(meta[prefix + 'n_trajectories']),
            ))
        except (KeyError, ValueError) as err:
            raise DatasetFormatError(f"incomplete metadata for component {index}: {err}") from err
    return tuple(components)


def read_dataset(path):
    """Load a dataset from its ``.csv`` path (or base path); returns (dataset, meta)."""
    base = Path(path)
    base = base.with_suffix('') if base.suffix == '.csv' else base
    csv_path, init_path, meta_path = (base.with_suffix(suffix) for suffix in ('.csv', '.init', '.meta'))
    meta = read_meta(meta_path)

    columns = {name: [] for name in DATASET_HEADER}
    try:
        with open(csv_path, newline='') as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if tuple(header or ()) != DATASET_HEADER:
                raise DatasetFormatError(f"{csv_path}: header must be {','.join(DATASET_HEADER)}")
            for number, row in enumerate(reader, start=2):
                if len(row) != len(DATASET_HEADER):
                    raise DatasetFormatError(f"{csv_path}:{number}: expected 5 fields, got {len(row)}")
                try:
                    columns['s'].append(int(row[0]))
                    columns['a'].append(int(row[1]))
                    columns['r'].append(float(row[2]))
                    columns['s_next'].append(int(row[3]))
                    columns['done'].append(int(row[4]))
                except ValueError as err:
                    raise DatasetFormatError(f"{csv_path}:{number}: {err}") from err
        with open(init_path) as handle:
            initial_states = [int(line) for line in handle if line.strip()]
    except DatasetFormatError:
        raise
    except OSError as err:
        raise DatasetFormatError(f"cannot read dataset {base}: {err}") from err
    except ValueError as err:
        raise DatasetFormatError(f"{init_path}: {err}") from err

    try:
        n_states, n_actions = int(meta['n_states']), int(meta['n_actions'])
    except (KeyError, ValueError) as err:
        raise DatasetFormatError(f"{meta_path} lacks n_states/n_actions") from err
    if any(flag not in (0, 1) for flag in columns['done']):
        raise DatasetFormatError(f"{csv_path}: done must be 0 or 1")
    try:
        dataset = OfflineDataset(
            states=columns['s'], actions=columns['a'], rewards=columns['r'],
            next_states=columns['s_next'], dones=columns['done'], initial_states=initial_states,
            n_states=n_states, n_actions=n_actions, mixture_label=meta.get('mixture', 'custom'),
            components=_components(meta),
        )
    except ValueError as err:
        raise DatasetFormatError(f"{base}: {err}") from err
    return dataset, meta


def write_rows(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row[column]) for column in columns])


def read_rows(path):
    try:
        with open(path, newline='') as handle:
            return list(csv.DictReader(handle))
    except OSError as err:
        raise DatasetFormatError(f"cannot read {path}: {err}") from err


def write_metrics(path, metrics):
    write_rows(path, MetricRow.FIELDS, [row.as_row() for row in metrics])


def read_metrics(path):
    rows = read_rows(path)
    if not rows:
        raise DatasetFormatError(f"{path} holds no metric rows")
    try:
        return [{key: float(value) for key, value in row.items()} for row in rows]
    except (TypeError, ValueError) as err:
        raise DatasetFormatError(f"{path}: {err}") from err


def write_checkpoint(path, state, extra=None):
    """Sections of space-separated rows, one row per state, then ``[meta]`` key = value lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tables = {
        'nu': state.nu[:, None],
        'critic': state.critic,
        'policy_logits': state.policy_logits,
        'adaptive': state.adaptive.bc_logits if state.adaptive is not None else np.empty((0, 0)),
    }
    meta = {'step': state.step, 'gamma': state.gamma, 'divergence': state.flex.name}
    meta.update(extra or {})
    if state.adaptive is not None:
        for name in ('alpha_plus', 'alpha_minus', 'beta', 'ema_cos', 'ema_e'):
            meta[name] = getattr(state.adaptive, name)
    with open(path, 'w', newline='\n') as handle:
        for section in CHECKPOINT_SECTIONS:
            handle.write(f"[{section}]\n")
            for row in tables[section]:
                handle.write(' '.join(fmt(value) for value in row) + '\n')
        handle.write('[meta]\n')
        for key, value in meta.items():
            handle.write(f"{key} = {fmt(value)}\n")


def read_checkpoint(path):
    sections, meta, current = {}, {}, None
    try:
        with open(path) as handle:
            for number, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith('[') and line.endswith(']'):
                    current = line[1:-1]
                    sections.setdefault(current, [])
                elif current == 'meta':
                    key, _, value = line.partition('=')
                    meta[key.strip()] = value.strip()
                elif current is None:
                    raise DatasetFormatError(f"{path}:{number}: data before the first section")
                else:
                    sections[current].append([float(value) for value in line.split()])
    except OSError as err:
        raise DatasetFormatError(f"cannot read checkpoint {path}: {err}") from err
    except ValueError as err:
        raise DatasetFormatError(f"{path}: {err}") from err
    missing = [name for name in CHECKPOINT_SECTIONS[:3] if name not in sections]
    if missing:
        raise DatasetFormatError(f"{path} lacks sections {missing}")
    tables = {name: np.array(rows, dtype=float) for name, rows in sections.items()}
    tables['nu'] = tables['nu'].reshape(-1)
    return tables, meta


def write_oracle_report(path, rows):
    write_rows(path, ORACLE_COLUMNS, rows)


def append_result(path, row):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not path.exists()
    with open(path, 'a', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        if fresh:
            writer.writerow(RESULT_COLUMNS)
        writer.writerow([fmt(row[column]) for column in RESULT_COLUMNS])


def rewrite_results(path, rows):
    write_rows(path, RESULT_COLUMNS, rows)
