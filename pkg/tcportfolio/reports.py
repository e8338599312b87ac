"""
Configuration grids and their result files.

A run manifest is a YAML file naming the market data (a CSV file or the parameters of a synthetic
market), an optional risk-free yield file and one or more grid blocks:

.. code-block:: yaml

    synthetic:
      seed: 7
      n_stocks: 500
      n_days: 2520
    grids:
      - portfolio: [index_tracking, equal, entropy]
        trading_frequency: [daily, weekly, monthly]
        renewing_frequency: [weekly, monthly, quarterly]
        d: [100, 300, 500]
        tc: [0.0, 0.005, 0.01]
      - portfolio: diversity_dynamic
        beta: [0.0, 0.05, 0.1]
        tc: 0.005

Every block is expanded into the cartesian product of its values; diversity parameters only apply to
the diversity families. Each distinct configuration gets a directory with ``metrics.json`` and
``wealth.csv``; the grid gets ``summary.csv`` (one row per metric, one column per configuration and per
capitalization index) and ``failures.json``.

CSV numbers are written with 17 significant digits. JSON numbers use the shortest representation that
reads back as the same double, which carries the same information in fewer digits.
"""

import itertools
import json
import multiprocessing
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
import yaml

from . import engine, log, market, metrics, models
from .synthetic import SyntheticParams, generate

logger = log.get_module_logger(__name__)

DIVERSITY_FIELDS = ('p', 'alpha', 'delta')
SMOOTHING_FIELDS = ('beta', 'xi')
SUMMARY_ROWS = ('yearly_return', 'excess_return', 'std', 'sharpe', 'wealth', 'tc', 'qv', 'years')


class RunManifest(models.Model):
    """
    Grid run description.

    Exactly one of `data` and `synthetic` names the market. `seed` overrides the synthetic seed.
    """

    data = models.String(desc='Market CSV file')
    synthetic = models.Nested(model=SyntheticParams, desc='Synthetic market parameters')
    risk_free = models.String(desc='Risk-free yield CSV file')
    seed = models.Integer(min_val=0, desc='Synthetic market seed')
    initial_wealth = models.Float(default=1000.0, min_val=0.0, min_open=True, desc='Initial wealth')
    include_index = models.Boolean(default=True, desc='Report capitalization indices')
    out = models.String(desc='Output directory')
    jobs = models.Integer(default=1, min_val=1, desc='Worker processes')
    grids = models.Array(min_length=1, required=True, desc='Grid blocks')

    def clean(self):
        if (self.data is None) == (self.synthetic is None):
            raise models.ValidationError('data', 'exactly one of data and synthetic must be given')
        if self.seed is not None and self.synthetic is not None:
            self.synthetic = self.synthetic.replace(seed=self.seed)
        self.points = expand_grids(self.grids, self.initial_wealth)

    def load_dataset(self) -> market.MarketDataset:
        if self.data is not None:
            return market.load_market_csv(self.data)
        return generate(self.synthetic)

    def load_risk_free(self) -> Optional[pd.Series]:
        if self.risk_free is None:
            return None
        return market.load_risk_free_csv(self.risk_free)


@dataclass
class GridReport:
    """Outcome of a grid run; `status` is nonzero when some configuration failed."""

    out: Path
    results: List[engine.BacktestResult] = field(default_factory=list)
    failures: List[Dict] = field(default_factory=list)
    summary: pd.DataFrame = field(default_factory=pd.DataFrame)

    @property
    def status(self) -> int:
        return 1 if self.failures else 0


def _block_values(block, index):
    path = f'grids[{index}]'
    if not isinstance(block, dict):
        raise models.ValidationError(path, f'expected a mapping, got {block!r}')
    values = OrderedDict()
    for name, value in block.items():
        if name not in engine.BacktestConfig._fields:
            raise models.ValidationError(f'{path}.{name}', 'unknown field')
        if isinstance(value, (list, tuple)):
            if not value:
                raise models.ValidationError(f'{path}.{name}', 'empty list')
            values[name] = list(value)
        else:
            values[name] = [value]
    return values


def expand_grids(grids, initial_wealth=1000.0) -> List[engine.BacktestConfig]:
    """
    Expand grid blocks into distinct backtest configurations, in order of first appearance.

    :param grids: list of mappings from BacktestConfig field names to a value or a list of values
    :param initial_wealth: default initial wealth of every configuration
    """
    points = OrderedDict()
    for index, block in enumerate(grids):
        values = _block_values(block, index)
        names = list(values)
        for combination in itertools.product(*(range(len(values[name])) for name in names)):
            kwargs = {name: values[name][i] for name, i in zip(names, combination)}
            kwargs.setdefault('initial_wealth', initial_wealth)
            kind = kwargs.get('portfolio')
            if kind not in engine.DIVERSITY_KINDS:
                for name in DIVERSITY_FIELDS:
                    kwargs.pop(name, None)
            if kind != 'diversity_dynamic':
                for name in SMOOTHING_FIELDS:
                    kwargs.pop(name, None)
            try:
                config = engine.BacktestConfig(**kwargs)
            except models.ValidationError as err:
                name = err.path.split('.')[0].split('[')[0]
                position = f'[{combination[names.index(name)]}]' if name in names and len(values[name]) > 1 else ''
                raise models.ValidationError(f'grids[{index}].{name}{position}', err.message) from err
            points.setdefault(config.key(), config)
    if not points:
        raise models.ValidationError('grids', 'grid is empty')
    return list(points.values())


def parse_overrides(items) -> Dict:
    """
    Turn ``key=value`` strings into a nested mapping, values parsed as YAML scalars. Dotted keys reach
    into nested sections, e.g. ``synthetic.n_stocks=50``.
    """
    overrides = {}
    for item in items or []:
        if '=' not in item:
            raise models.ValidationError(item, 'override must look like key=value')
        key, text = item.split('=', 1)
        value = yaml.safe_load(text) if text else None
        target = overrides
        parts = key.strip().split('.')
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    return overrides


def _merge(base, overrides):
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def apply_to_blocks(grids, values: Dict):
    """Set backtest fields in every grid block, replacing the values the blocks give."""
    if isinstance(grids, dict):
        grids = [grids]
    if not isinstance(grids, list):
        return grids
    return [dict(block, **values) if isinstance(block, dict) else block for block in grids]


def load_manifest(path, overrides=None) -> RunManifest:
    """
    Read and validate a YAML run manifest. Relative data paths are taken relative to the manifest.

    :param path: manifest file
    :param overrides: mapping merged over the file contents, see :func:`parse_overrides`. Keys naming
        backtest fields which are not manifest fields (``tc``, ``d``, ``portfolio`` ...) are set in every
        grid block.
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            info = yaml.safe_load(handle)
    except OSError as err:
        raise models.ValidationError('', f'cannot read manifest {path}: {err}') from err
    except yaml.YAMLError as err:
        raise models.ValidationError('', f'{path} is not valid YAML: {err}') from err
    if not isinstance(info, dict):
        raise models.ValidationError('', f'{path} must contain a mapping')
    overrides = dict(overrides or {})
    shared = {
        name: overrides.pop(name) for name in list(overrides)
        if name not in RunManifest._fields and name in engine.BacktestConfig._fields
    }
    info = _merge(info, overrides)
    if shared:
        info['grids'] = apply_to_blocks(info.get('grids'), shared)
    for name in ('data', 'risk_free'):
        if isinstance(info.get(name), str) and not os.path.isabs(info[name]):
            info[name] = str(path.parent / info[name])
    return RunManifest(**info)


# per worker process state, set by _init_worker
_WORKER = {}


def _init_worker(dataset, risk_free):
    _WORKER['dataset'] = dataset
    _WORKER['risk_free'] = risk_free
    _WORKER['decomposition'] = market.decompose(dataset)


def _run_point(config):
    try:
        result = engine.run_backtest(
            config, _WORKER['dataset'], risk_free=_WORKER['risk_free'], decomposition=_WORKER['decomposition']
        )
        return config, result, None
    except Exception as err:
        logger.error('Backtest %s failed: %s', config.label(), err)
        return config, None, {
            'key': config.key(),
            'label': config.label(),
            'error': str(err),
            'type': type(err).__name__,
            'date': None if getattr(err, 'date', None) is None else f'{pd.Timestamp(err.date):%Y-%m-%d}',
            'stock': getattr(err, 'stock', None),
        }


def benchmark_config(config: engine.BacktestConfig) -> engine.BacktestConfig:
    """The index tracking configuration sharing list size, frequencies, costs and initial wealth."""
    return engine.BacktestConfig(
        portfolio='index_tracking', d=config.d, trading_frequency=config.trading_frequency,
        renewing_frequency=config.renewing_frequency, tc_buy=config.tc_buy, tc_sell=config.tc_sell,
        initial_wealth=config.initial_wealth,
    )


def atomic_write(path: Path, writer):
    """Call ``writer(tmp_path)`` then move the temporary file over `path`."""
    path = Path(path)
    tmp = path.with_name(f'.{path.name}.tmp')
    writer(tmp)
    os.replace(tmp, path)


def write_json(path, info):
    def writer(tmp):
        with open(tmp, 'w', encoding='utf-8') as handle:
            json.dump(info, handle, indent=2)
            handle.write('\n')
    atomic_write(path, writer)


def write_csv(path, frame: pd.DataFrame, index=False):
    atomic_write(path, lambda tmp: frame.to_csv(tmp, index=index, float_format=market.FLOAT_FORMAT, lineterminator='\n'))


def write_point(directory: Path, result: engine.BacktestResult):
    """Write ``metrics.json`` and ``wealth.csv`` of one configuration."""
    directory.mkdir(parents=True, exist_ok=True)
    write_json(directory / 'metrics.json', {
        'key': result.config.key(),
        'config': result.config.to_dict(),
        'metrics': result.metrics.to_dict(),
    })
    write_csv(directory / 'wealth.csv', result.to_frame())


def index_columns(points, dataset, risk_free, initial_wealth) -> Dict[str, metrics.Metrics]:
    """Metrics of the capitalization index for every (list size, renewing frequency) of the grid."""
    columns = OrderedDict()
    for config in points:
        name = f'index_d{config.d}_{config.renewing_frequency}'
        if name in columns:
            continue
        _, renewal_days = engine.build_calendar(dataset.dates, 'daily', config.renewing_frequency)
        level = engine.capitalization_index(dataset, config.d, renewal_days, initial_level=initial_wealth)
        columns[name] = metrics.summarize_paths(dataset.dates, level, risk_free=risk_free)
    return columns


def summary_table(columns: Dict[str, metrics.Metrics]) -> pd.DataFrame:
    """Rows are metrics, columns are configurations."""
    table = pd.DataFrame(
        {name: [getattr(values, row) for row in SUMMARY_ROWS] for name, values in columns.items()},
        index=list(SUMMARY_ROWS),
    )
    table.index.name = 'metric'
    return table


def run_grid(manifest: RunManifest, out=None, jobs=None) -> GridReport:
    """
    Run every configuration of a manifest and write the result files.

    :param manifest: RunManifest
    :param out: output directory, defaults to the manifest's
    :param jobs: worker processes, defaults to the manifest's
    :return: GridReport
    """
    out = Path(out or manifest.out or 'results')
    jobs = jobs or manifest.jobs
    out.mkdir(parents=True, exist_ok=True)
    report = GridReport(out=out)

    dataset = manifest.load_dataset()
    risk_free = manifest.load_risk_free()
    points = manifest.points
    keys = {config.key() for config in points}
    extra = OrderedDict()
    for config in points:
        benchmark = benchmark_config(config)
        if benchmark.key() not in keys:
            extra.setdefault(benchmark.key(), benchmark)
    tasks = points + list(extra.values())
    log.important(logger, 'Running %d configurations (%d benchmarks) with %d job(s)', len(points), len(extra), jobs)

    if jobs == 1:
        _init_worker(dataset, risk_free)
        outcomes = [_run_point(config) for config in tasks]
    else:
        with multiprocessing.Pool(processes=jobs, initializer=_init_worker, initargs=(dataset, risk_free)) as pool:
            outcomes = pool.map(_run_point, tasks, chunksize=1)

    finished = {config.key(): result for config, result, _ in outcomes if result is not None}
    columns = OrderedDict()
    labels = set()
    for config, result, failure in outcomes[:len(points)]:
        if failure is not None:
            report.failures.append(failure)
            continue
        benchmark = finished.get(benchmark_config(config).key())
        if benchmark is not None:
            result.metrics = metrics.summarize(result, risk_free=risk_free, benchmark=benchmark)
        label = config.label()
        suffix = 2
        while label in labels:
            label = f'{config.label()}-{suffix}'
            suffix += 1
        labels.add(label)
        write_point(out / label, result)
        columns[label] = result.metrics
        report.results.append(result)

    if manifest.include_index:
        try:
            columns.update(index_columns(points, dataset, risk_free, manifest.initial_wealth))
        except engine.BacktestError as err:
            logger.error('Capitalization index failed: %s', err)
            report.failures.append({'key': 'index', 'label': 'index', 'error': str(err), 'type': type(err).__name__,
                                    'date': None, 'stock': None})

    report.summary = summary_table(columns)
    write_csv(out / 'summary.csv', report.summary, index=True)
    write_json(out / 'failures.json', report.failures)
    if report.failures:
        logger.error('%d of %d configurations failed, see %s', len(report.failures), len(points), out / 'failures.json')
    log.important(logger, 'Grid finished, results in %s', out)
    return report
