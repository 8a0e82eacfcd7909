"""
Orchestration shared by the management commands: dataset generation, seed
runs (optionally in a process pool) and error translation.

Nothing here touches the database, so seed runs can execute in worker
processes; recording results is left to ``flexrl.results`` in the parent.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path

from django.core.management.base import CommandError

from .exceptions import ConfigError, DatasetFormatError, FlexRLError, NanError, UnknownPreset
from .mdp import DatasetRequest, normalized_return, policy_value
from .storage import dataset_base, read_dataset, write_checkpoint, write_dataset, write_metrics
from .trainers import extract_policy, train

logger = logging.getLogger(__name__)

USAGE_ERRORS = (ConfigError, DatasetFormatError, UnknownPreset, OSError)


@contextmanager
def command_errors():
    """Re-raise flexrl errors as CommandError: exit 2 for usage or IO problems, 1 otherwise."""
    try:
        yield
    except USAGE_ERRORS as err:
        raise CommandError(str(err), returncode=2) from err
    except NanError as err:
        raise CommandError(f"training aborted at step {err.step}: {err}", returncode=1) from err
    except FlexRLError as err:
        raise CommandError(f"{type(err).__name__}: {err}", returncode=1) from err


def validated(serializer):
    if not serializer.is_valid():
        problems = []
        for name, messages in serializer.errors.items():
            text = ' '.join(str(message) for message in messages)
            problems.append(text if name == 'non_field_errors' else f"{name}: {text}")
        raise ConfigError('; '.join(problems))
    return serializer


def generate_dataset(request, root, overwrite=True):
    """Write the dataset files for ``request`` under ``root``; returns the CSV path."""
    base = dataset_base(root, request.env, request.mixture, request.seed)
    csv_path = base.with_suffix('.csv')
    if csv_path.exists() and not overwrite:
        logger.info("reusing %s", csv_path)
        return csv_path
    _, dataset = request.synthesize()
    write_dataset(dataset, base, request.meta())
    return csv_path


def load_dataset(path):
    """Read a dataset and rebuild the environment its metadata names."""
    dataset, meta = read_dataset(path)
    request = DatasetRequest.from_meta(meta)
    mdp = request.build_mdp()
    fingerprint = mdp.fingerprint()
    if meta.get('mdp_hash', fingerprint) != fingerprint:
        raise DatasetFormatError(f"{path} was generated for a different {request.env} model (mdp_hash mismatch)")
    dataset.check_consistent(mdp)
    return mdp, dataset, request


@dataclass(frozen=True)
class SeedRun:
    seed: int
    final_return: float
    final_norm_return: float
    steps: int
    metrics_path: str
    checkpoint_path: str


def run_seed(dataset_path, config, out_dir):
    """Train one seed and write its metrics CSV and checkpoint into ``out_dir``."""
    mdp, dataset, _ = load_dataset(dataset_path)
    logger.info("training %s with %s, seed %d", config.algorithm.label, config.divergence_label, config.seed)
    state, metrics = train(mdp, dataset, config)

    out_dir = Path(out_dir)
    metrics_path = out_dir / f"metrics_s{config.seed}.csv"
    checkpoint_path = out_dir / f"checkpoint_s{config.seed}.txt"
    write_metrics(metrics_path, metrics)
    write_checkpoint(checkpoint_path, state, extra={
        'algorithm': config.algorithm.value, 'seed': config.seed, 'dataset': dataset_path,
    })

    policy = extract_policy(state)
    return SeedRun(
        seed=config.seed,
        final_return=float(mdp.p0 @ policy_value(mdp, policy)),
        final_norm_return=normalized_return(mdp, policy),
        steps=state.step,
        metrics_path=str(metrics_path),
        checkpoint_path=str(checkpoint_path),
    )


def run_seeds(dataset_path, config, seeds, out_dir, workers=1):
    """One run per seed, in seed order; ``workers > 1`` spreads them over processes."""
    configs = [replace(config, seed=seed) for seed in seeds]
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_seed, str(dataset_path), seed_config, str(out_dir))
                       for seed_config in configs]
            return [future.result() for future in futures]
    return [run_seed(str(dataset_path), seed_config, str(out_dir)) for seed_config in configs]
