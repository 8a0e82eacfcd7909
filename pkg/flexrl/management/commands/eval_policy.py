from django.core.management.base import BaseCommand

from flexrl.exceptions import DatasetFormatError
from flexrl.experiments import command_errors, load_dataset
from flexrl.mdp import TabularPolicy
from flexrl.storage import read_checkpoint
from flexrl.trainers import evaluate


class Command(BaseCommand):
    help = "Evaluate a checkpoint's policy in the environment of its dataset"

    def add_arguments(self, parser):
        parser.add_argument('checkpoint')
        parser.add_argument('--dataset', help="dataset .csv (default: the one recorded in the checkpoint)")
        parser.add_argument('--episodes', type=int, default=100)
        parser.add_argument('--horizon', type=int, default=100)
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--greedy', action='store_true', help="act greedily on the policy logits")

    def handle(self, *args, **options):
        with command_errors():
            tables, meta = read_checkpoint(options['checkpoint'])
            dataset_path = options['dataset'] or meta.get('dataset')
            if not dataset_path:
                raise DatasetFormatError(f"{options['checkpoint']} names no dataset; pass --dataset")
            mdp, _, _ = load_dataset(dataset_path)
            logits = tables['policy_logits']
            if logits.shape != (mdp.n_states, mdp.n_actions):
                raise DatasetFormatError(
                    f"checkpoint policy has shape {logits.shape}, environment needs {(mdp.n_states, mdp.n_actions)}")
            if options['greedy']:
                policy = TabularPolicy.deterministic(logits.argmax(axis=1), mdp.n_actions)
            else:
                policy = TabularPolicy.from_logits(logits)
            result = evaluate(mdp, policy, options['episodes'], options['horizon'], options['seed'])

        self.stdout.write(f"exact return: {result.exact_return:.6f}")
        self.stdout.write(f"normalized return: {result.normalized_return:.2f}")
        self.stdout.write(
            f"monte-carlo return: {result.mean_return:.6f} +/- {result.stderr:.6f} "
            f"(normalized {result.mc_normalized_return:.2f}, {options['episodes']} episodes)"
        )
