import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from flexrl.conf import output_root
from flexrl.exceptions import ConfigError, FlexRLError
from flexrl.experiments import command_errors, generate_dataset, run_seeds, validated
from flexrl.mdp import MIXTURES
from flexrl.results import RunKey, record_runs, recorded_seeds
from flexrl.serializers import DatasetRequestSerializer
from flexrl.storage import run_dir
from flexrl.trainers import Algorithm

from .train import OPTIONS, training_config

logger = logging.getLogger(__name__)

DEFAULT_DIVERGENCES = ('chi2', 'kl', 'le_cam:chi2', 'soft_chi2', 'iql(0.7)')


class Command(BaseCommand):
    help = "Train every mixture x algorithm x divergence x seed combination, generating missing datasets"

    def add_arguments(self, parser):
        parser.add_argument('--env', default='grid4')
        parser.add_argument('--mixtures', nargs='+', choices=sorted(MIXTURES), default=sorted(MIXTURES))
        parser.add_argument('--algorithms', nargs='+', default=list(Algorithm.values))
        parser.add_argument('--divergences', nargs='+', default=list(DEFAULT_DIVERGENCES))
        parser.add_argument('--seeds', type=int, default=3)
        parser.add_argument('--data-seed', type=int, default=0)
        parser.add_argument('--steps', type=int)
        parser.add_argument('--adaptive', help="on or off")
        parser.add_argument('--workers', type=int, default=1)
        parser.add_argument('--overwrite', action='store_true', help="rerun seeds already recorded")
        parser.add_argument('--config', help="flat key = value file of training options")
        parser.add_argument('--out', help="output root (default: FLEXRL_OUT or settings)")


    def handle(self, *args, **options):
        root = Path(options['out'] or output_root())
        completed = skipped = 0
        failures = []
        with command_errors():
            if options['seeds'] < 1 or options['workers'] < 1:
                raise ConfigError("--seeds and --workers must be at least 1")
            plan = []
            for mixture in options['mixtures']:
                request = validated(DatasetRequestSerializer(data={
                    'env': options['env'], 'mixture': mixture, 'seed': options['data_seed'],
                })).to_request()
                dataset_path = generate_dataset(request, root, overwrite=False)
                for algorithm in options['algorithms']:
                    for divergence in options['divergences']:
                        values = {name: None for name in OPTIONS}
                        values.update(config=options['config'], algorithm=algorithm, divergence=divergence,
                                      steps=options['steps'], adaptive=options['adaptive'])
                        plan.append((request, dataset_path, training_config(values)))

        for request, dataset_path, config in plan:
            key = RunKey.for_run(request, config)
            seeds = range(options['seeds'])
            if not options['overwrite']:
                done = recorded_seeds(key, seeds)
                seeds = [seed for seed in seeds if seed not in done]
                skipped += len(done)
            if not seeds:
                continue
            out_dir = run_dir(root, key.env, key.mixture, key.algorithm, key.divergence)
            try:
                runs = run_seeds(dataset_path, config, seeds, out_dir, options['workers'])
            except FlexRLError as err:
                logger.warning("%s %s on %s failed: %s", key.algorithm, key.divergence, key.mixture, err)
                failures.append(f"{key.mixture}/{key.algorithm}/{key.divergence}: {err}")
                continue
            stats = record_runs(key, runs, root)
            completed += len(runs)
            self.stdout.write(
                f"{key.mixture:<4} {key.algorithm:<12} {key.divergence:<28} "
                f"{stats['mean_norm_return']:7.2f} +/- {stats['std_norm_return']:.2f}"
            )

        self.stdout.write(f"sweep finished: {completed} runs, {skipped} already recorded, {len(failures)} failed")
        if failures:
            raise CommandError(f"{len(failures)} configurations failed; first: {failures[0]}", returncode=1)
