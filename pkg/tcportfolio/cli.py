"""
Command line interface.

::

    tcportfolio run grid.yml --out results --jobs 4 --set tc=0.005
    tcportfolio gen --seed 1 --stocks 3 --days 10 --out market.csv
    tcportfolio validate grid.yml
    tcportfolio validate market.csv
"""

import argparse
import logging
import sys
from pathlib import Path

from . import engine, log, market, models, reports, synthetic, version

logger = log.get_module_logger(__name__)

MANIFEST_SUFFIXES = ('.yml', '.yaml')


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='tcportfolio', description='Backtest stock portfolios under proportional transaction costs'
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {version.get_version()}')
    parser.add_argument('-v', '--verbose', action='store_true', help='Verbose Logging')
    parser.add_argument('--log', type=str, help='Also write a rotating log file')
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help='Run a configuration grid')
    run.add_argument('manifest', type=str, help='YAML run manifest')
    run.add_argument('--out', type=str, help='Output directory')
    run.add_argument('--jobs', type=int, help='Worker processes')
    run.add_argument(
        '--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
        help='Override a manifest field, e.g. tc=0.005 or synthetic.n_stocks=50',
    )

    gen = commands.add_parser('gen', help='Generate a synthetic market CSV file')
    gen.add_argument('--out', type=str, required=True, help='CSV file to write')
    gen.add_argument('--seed', type=int, help='Random seed')
    gen.add_argument('--stocks', dest='n_stocks', type=int, help='Number of stocks')
    gen.add_argument('--days', dest='n_days', type=int, help='Number of business days')
    gen.add_argument('--start', type=str, help='First date, YYYY-MM-DD')
    gen.add_argument('--dividend-probability', type=float, help='Dividend chance per stock-day')
    gen.add_argument('--delisting-hazard', type=float, help='Delisting chance per stock-day')
    gen.add_argument(
        '--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
        help='Any other generator parameter',
    )

    check = commands.add_parser('validate', help='Validate a run manifest or a market CSV file')
    check.add_argument('path', type=str, help='Manifest (.yml, .yaml) or market CSV file')
    return parser


def run_command(args) -> int:
    manifest = reports.load_manifest(args.manifest, reports.parse_overrides(args.overrides))
    report = reports.run_grid(manifest, out=args.out, jobs=args.jobs)
    return report.status


def gen_command(args) -> int:
    info = reports.parse_overrides(args.overrides)
    for name in ('seed', 'n_stocks', 'n_days', 'start', 'dividend_probability', 'delisting_hazard'):
        value = getattr(args, name)
        if value is not None:
            info[name] = value
    params = synthetic.SyntheticParams(**info)
    dataset = synthetic.generate(params)
    path = market.write_market_csv(dataset, args.out)
    digest = market.digest(path)
    log.important(logger, 'Wrote %d stocks over %d days to %s', dataset.n_stocks, dataset.n_days, path)
    print(digest)
    return 0


def validate_command(args) -> int:
    path = Path(args.path)
    if path.suffix.lower() in MANIFEST_SUFFIXES:
        manifest = reports.load_manifest(path)
        log.important(logger, '%s: valid manifest with %d configurations', path, len(manifest.points))
    else:
        dataset = market.load_market_csv(path)
        log.important(logger, '%s: valid market data, %d stocks over %d days', path, dataset.n_stocks, dataset.n_days)
    return 0


COMMANDS = {
    'run': run_command,
    'gen': gen_command,
    'validate': validate_command,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.verbose:
        log.log_to_console(logging.DEBUG, debugging=True)
    else:
        log.log_to_console(logging.INFO)
    if args.log:
        log.log_to_file(args.log)

    try:
        return COMMANDS[args.command](args)
    except models.ValidationError as err:
        logger.error('Invalid configuration: %s', err)
    except (market.DataError, engine.BacktestError, OSError) as err:
        logger.error('%s', err)
    return 2


if __name__ == '__main__':
    sys.exit(main())
