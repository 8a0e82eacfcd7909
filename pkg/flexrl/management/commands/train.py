from pathlib import Path

from django.core.management.base import BaseCommand

from flexrl.conf import merge_options, output_root, read_config_file
from flexrl.exceptions import ConfigError
from flexrl.experiments import command_errors, load_dataset, run_seeds, validated
from flexrl.results import RunKey, record_runs, require_new_seeds
from flexrl.serializers import TrainConfigSerializer
from flexrl.storage import run_dir

OPTIONS = (
    'algorithm', 'divergence', 'alpha_minus', 'alpha_plus', 'beta', 'lp_mode', 'alpha_g',
    'lr_nu', 'lr_critic', 'lr_policy', 'batch_size', 'steps', 'awr_temperature',
    'reward_scale', 'adaptive', 'iota_b', 'ema_decay', 'e_clip', 'clip_e',
    'eval_interval', 'eval_episodes', 'eval_horizon',
)


def add_training_arguments(parser):
    parser.add_argument('--algorithm', help="flex-f-q or flex-f-dice")
    parser.add_argument('--divergence', help="catalog name, lower:upper pair, or preset")
    parser.add_argument('--preset', dest='divergence', help="alias of --divergence for presets")
    parser.add_argument('--alpha-minus', type=float)
    parser.add_argument('--alpha-plus', type=float)
    parser.add_argument('--beta', type=float)
    parser.add_argument('--lp-mode')
    parser.add_argument('--alpha-g', type=float)
    parser.add_argument('--lr-nu', type=float)
    parser.add_argument('--lr-critic', type=float)
    parser.add_argument('--lr-policy', type=float)
    parser.add_argument('--batch-size', type=int)
    parser.add_argument('--steps', type=int)
    parser.add_argument('--awr-temperature', type=float)
    parser.add_argument('--reward-scale', type=float)
    parser.add_argument('--adaptive', help="on or off")
    parser.add_argument('--iota-b', type=float)
    parser.add_argument('--ema-decay', type=float)
    parser.add_argument('--e-clip', help="low,high")
    parser.add_argument('--clip-e', help="on or off")
    parser.add_argument('--eval-interval', type=int)
    parser.add_argument('--eval-episodes', type=int)
    parser.add_argument('--eval-horizon', type=int)
    parser.add_argument('--seeds', type=int, default=1, help="train seeds 0..N-1")
    parser.add_argument('--workers', type=int, default=1, help="processes for seed-parallel runs")
    parser.add_argument('--overwrite', action='store_true', help="replace results of seeds already recorded")
    parser.add_argument('--config', help="flat key = value file; flags override it")
    parser.add_argument('--out', help="output root (default: FLEXRL_OUT or settings)")


def training_config(options):
    file_values = read_config_file(options['config']) if options['config'] else {}
    values = merge_options(file_values, {name: options.get(name) for name in OPTIONS})
    return validated(TrainConfigSerializer(data=values)).to_config()


class Command(BaseCommand):
    help = "Train Flex-f-Q or Flex-f-DICE on a dataset, one run per seed"

    def add_arguments(self, parser):
        parser.add_argument('dataset', help="dataset .csv written by gen_data")
        add_training_arguments(parser)

    def handle(self, *args, **options):
        with command_errors():
            config = training_config(options)
            if options['seeds'] < 1 or options['workers'] < 1:
                raise ConfigError("--seeds and --workers must be at least 1")
            root = Path(options['out'] or output_root())
            _, _, request = load_dataset(options['dataset'])
            key = RunKey.for_run(request, config)
            seeds = range(options['seeds'])
            require_new_seeds(key, seeds, options['overwrite'])

            out_dir = run_dir(root, key.env, key.mixture, key.algorithm, key.divergence)
            runs = run_seeds(options['dataset'], config, seeds, out_dir, options['workers'])
            stats = record_runs(key, runs, root)

        for run in runs:
            self.stdout.write(f"seed {run.seed}: normalized return {run.final_norm_return:.2f} ({run.metrics_path})")
        self.stdout.write(self.style.SUCCESS(
            f"{key.algorithm} {key.divergence} on {key.env}/{key.mixture}: "
            f"{stats['mean_norm_return']:.2f} +/- {stats['std_norm_return']:.2f} over {stats['seeds']} seeds"
        ))
