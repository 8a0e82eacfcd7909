"""``python -m flexrl gen-data|train|eval|check|plot|sweep [options]``"""
import os
import sys

COMMANDS = {
    'gen-data': 'gen_data',
    'train': 'train',
    'eval': 'eval_policy',
    'check': 'check_invariants',
    'plot': 'plot',
    'sweep': 'sweep',
}

# commands that record results need the store's tables
STORE_COMMANDS = ('train', 'sweep')


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in COMMANDS:
        sys.stderr.write(f"usage: python -m flexrl {{{','.join(COMMANDS)}}} [options]\n")
        return 2
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'flexrl_backend.settings')
    import django
    from django.core.management import call_command, execute_from_command_line

    django.setup()
    if argv[0] in STORE_COMMANDS:
        call_command('migrate', verbosity=0, interactive=False)
    execute_from_command_line(['flexrl', COMMANDS[argv[0]], *argv[1:]])
    return 0


if __name__ == '__main__':
    sys.exit(main())
