from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from flexrl.checks import RESULT_COLUMNS, SUITES, run_suites
from flexrl.conf import flexrl_setting, output_root
from flexrl.experiments import command_errors
from flexrl.storage import write_oracle_report, write_rows


class Command(BaseCommand):
    help = "Run the numerical invariant suites and print a pass/fail matrix"

    def add_arguments(self, parser):
        parser.add_argument('--suite', action='append', choices=sorted(SUITES),
                            help="suite to run; repeat for several (default: all)")
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--max-size', type=int, help="largest |S||A| for oracle instances")
        parser.add_argument('--csv', help="write the per-case table here")
        parser.add_argument('--out', help="output root for oracle_report.csv")

    def handle(self, *args, **options):
        max_size = options['max_size'] or flexrl_setting('CHECK_MAX_SIZE')
        with command_errors():
            results = run_suites(options['suite'], seed=options['seed'], max_size=max_size)
            if options['csv']:
                write_rows(options['csv'], RESULT_COLUMNS, [result.as_row() for result in results])
            reports = [result.report for result in results if result.report]
            if reports:
                write_oracle_report(Path(options['out'] or output_root()) / 'oracle_report.csv', reports)

        for name in options['suite'] or SUITES:
            suite = [result for result in results if result.suite == name]
            failed = [result for result in suite if not result.passed]
            status = self.style.SUCCESS('pass') if not failed else self.style.ERROR('FAIL')
            self.stdout.write(f"{name:<12} {status}  {len(suite) - len(failed)}/{len(suite)}")

        failures = [result for result in results if not result.passed]
        if failures:
            first = failures[0]
            raise CommandError(
                f"{len(failures)} checks failed; first: {first.suite} {first.case}: "
                f"error {first.error:.3g} > tolerance {first.tolerance:.3g} {first.detail}".rstrip(),
                returncode=1,
            )
