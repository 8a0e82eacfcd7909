"""Recording finished runs in the result store and in results.csv."""
import logging
from dataclasses import dataclass
from pathlib import Path

from django.db import transaction

from .exceptions import ConfigError
from .models import ResultRow
from .storage import append_result, rewrite_results

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunKey:
    env: str
    mixture: str
    algorithm: str
    divergence: str

    @classmethod
    def for_run(cls, request, config):
        return cls(request.env, request.mixture, config.algorithm.value, config.divergence_label)

    def as_filter(self):
        return {'env': self.env, 'mixture': self.mixture,
                'algorithm': self.algorithm, 'divergence': self.divergence}


def recorded_seeds(key, seeds):
    return set(ResultRow.objects.for_key(**key.as_filter()).filter(seed__in=list(seeds))
               .values_list('seed', flat=True))


def require_new_seeds(key, seeds, overwrite=False):
    existing = recorded_seeds(key, seeds)
    if existing and not overwrite:
        raise ConfigError(
            f"results for {key.env}/{key.mixture}/{key.algorithm}/{key.divergence} seeds "
            f"{sorted(existing)} already exist; pass --overwrite to replace them"
        )
    return existing


def summary_for(key):
    return ResultRow.objects.for_key(**key.as_filter()).summary().first()


def _csv_row(row, stats):
    return {
        'env': row.env, 'mixture': row.mixture, 'algorithm': row.algorithm,
        'divergence': row.divergence, 'seed': row.seed,
        'final_norm_return': row.final_norm_return,
        'mean_norm_return': stats['mean_norm_return'],
        'std_norm_return': stats['std_norm_return'],
    }


def results_table():
    """Every stored row with its configuration's current mean and std."""
    stats = {(item['env'], item['mixture'], item['algorithm'], item['divergence']): item
             for item in ResultRow.objects.summary()}
    return [_csv_row(row, stats[(row.env, row.mixture, row.algorithm, row.divergence)])
            for row in ResultRow.objects.all()]


def record_runs(key, runs, root):
    """
    Store ``runs`` and extend results.csv. Replacing an existing seed
    rewrites the whole file from the store; otherwise rows are appended.
    """
    results_path = Path(root) / 'results.csv'
    replaced = False
    stored = []
    with transaction.atomic():
        for run in runs:
            row, created = ResultRow.objects.update_or_create(
                seed=run.seed, **key.as_filter(),
                defaults={
                    'final_return': run.final_return,
                    'final_norm_return': run.final_norm_return,
                    'steps': run.steps,
                    'metrics_path': run.metrics_path,
                    'checkpoint_path': run.checkpoint_path,
                },
            )
            replaced = replaced or not created
            stored.append(row)

    stats = summary_for(key)
    if replaced:
        logger.info("replaced existing seeds; rewriting %s", results_path)
        rewrite_results(results_path, results_table())
    else:
        for row in stored:
            append_result(results_path, _csv_row(row, stats))
    return stats
