from django.core.management.base import BaseCommand

from flexrl.divergences import parse_divergence
from flexrl.experiments import command_errors
from flexrl.plots import render_function, render_traces
from flexrl.storage import read_metrics, slug


class Command(BaseCommand):
    help = "Render a divergence's function curves or a run's alpha/beta traces as SVG"

    def add_arguments(self, parser):
        parser.add_argument('kind', choices=('function', 'traces'))
        parser.add_argument('target', help="divergence name for 'function', metrics CSV for 'traces'")
        parser.add_argument('--alpha-minus', type=float, default=1.0)
        parser.add_argument('--alpha-plus', type=float, default=1.0)
        parser.add_argument('--beta', type=float, default=1.0)
        parser.add_argument('--out', help="SVG path (default: next to the input or in the working directory)")

    def handle(self, *args, **options):
        with command_errors():
            if options['kind'] == 'function':
                f = parse_divergence(options['target'], options['alpha_minus'],
                                     options['alpha_plus'], options['beta'])
                path = render_function(f, options['out'] or f"{slug(f.name)}.svg")
            else:
                metrics = read_metrics(options['target'])
                default = options['target'].rsplit('.', 1)[0] + '_traces.svg'
                path = render_traces(metrics, options['out'] or default)
        self.stdout.write(self.style.SUCCESS(f"wrote {path}"))
