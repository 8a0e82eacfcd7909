from django.core.management.base import BaseCommand

from flexrl.conf import merge_options, output_root, read_config_file
from flexrl.experiments import command_errors, generate_dataset, validated
from flexrl.mdp import MIXTURES
from flexrl.serializers import DatasetRequestSerializer

OPTIONS = ('env', 'mixture', 'seed', 'n_trajectories', 'horizon', 'gamma', 'noise')


class Command(BaseCommand):
    help = "Generate an offline dataset (.csv, .init, .meta) from a behavior mixture"

    def add_arguments(self, parser):
        parser.add_argument('--env', help="gridN or gridWxH")
        parser.add_argument('--mixture', choices=sorted(MIXTURES))
        parser.add_argument('--seed', type=int)
        parser.add_argument('--n-trajectories', type=int)
        parser.add_argument('--horizon', type=int)
        parser.add_argument('--gamma', type=float)
        parser.add_argument('--noise', type=float)
        parser.add_argument('--config', help="flat key = value file; flags override it")
        parser.add_argument('--out', help="output root (default: FLEXRL_OUT or settings)")

    def handle(self, *args, **options):
        with command_errors():
            file_values = read_config_file(options['config']) if options['config'] else {}
            values = merge_options(file_values, {name: options[name] for name in OPTIONS})
            request = validated(DatasetRequestSerializer(data=values)).to_request()
            root = options['out'] or output_root()
            csv_path = generate_dataset(request, root)
        self.stdout.write(self.style.SUCCESS(f"wrote {csv_path}"))
