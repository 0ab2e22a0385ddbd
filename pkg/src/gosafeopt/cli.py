"""Command line entry point: ``run``, ``oracle`` and ``check``."""

import argparse
import json
import logging
import os
import sys

from .campaign import oracle_rows, run_campaign, write_rows
from .config import ConfigError, load_config, parse_seeds
from .envs import oracle_truth

__all__ = ['main', 'build_parser']


def build_parser():
    parser = argparse.ArgumentParser(
        prog='gosafeopt',
        description='Safe Bayesian optimization with backup policies.')
    parser.add_argument('-v', '--verbose', action='store_true')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='run a seeded campaign')
    run.add_argument('--config', required=True)
    run.add_argument('--seeds', help="e.g. '0..19' or '0,3,5'")
    run.add_argument('--algo', choices=('gosafeopt', 'safeopt'))
    run.add_argument('--out')

    oracle = sub.add_parser('oracle', help='dump the ground-truth table')
    oracle.add_argument('--config', required=True)
    oracle.add_argument('--out', required=True)

    check = sub.add_parser('check', help='validate a configuration')
    check.add_argument('--config', required=True)
    return parser


def _run(args, config):
    seeds = parse_seeds(args.seeds) if args.seeds else None
    summary = run_campaign(config, seeds, args.algo, args.out)
    out = args.out or config.out
    print('{} seeds, {} violations, {} triggers, median final objective '
          '{:.4f}; results in {}'.format(
              len(summary['seeds']), summary['total_violations'],
              summary['total_triggers'], summary['median_final_objective'],
              out))
    return 0


def _oracle(args, config):
    env = config.make_env(0)
    f, g = oracle_truth(env, config.oracle_repeats)
    os.makedirs(args.out, exist_ok=True)
    header, rows = oracle_rows(env, f, g)
    path = os.path.join(args.out, 'oracle.csv')
    write_rows(path, rows, header)
    print('wrote {} rows to {}'.format(len(rows), path))
    return 0


def _check(args, config):
    print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose
                        else logging.ERROR,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        config = load_config(args.config)
        handler = {'run': _run, 'oracle': _oracle, 'check': _check}
        return handler[args.command](args, config)
    except (ConfigError, OSError) as exc:
        print('error: {}'.format(exc), file=sys.stderr)
        return 2
    except Exception as exc:  # any run failure ends with a message
        print('error: run failed: {}'.format(exc), file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
