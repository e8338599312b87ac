import json
import os
import tempfile
import unittest

import pandas
import yaml

from tcportfolio import cli, market, models, reports

SYNTHETIC = {'seed': 2, 'n_stocks': 12, 'n_days': 600, 'dividend_probability': 0.02}


def write_manifest(directory, info, name='grid.yml'):
    path = os.path.join(directory, name)
    with open(path, 'w', encoding='utf-8') as handle:
        yaml.safe_dump(info, handle)
    return path


class GridExpansionTestCase(unittest.TestCase):

    def test_product(self):
        points = reports.expand_grids([{'portfolio': ['equal', 'entropy'], 'd': [2, 3], 'tc': [0.0, 0.01]}])
        self.assertEqual(len(points), 8)
        self.assertEqual(points[0].portfolio, 'equal')

    def test_irrelevant_fields_dropped(self):
        points = reports.expand_grids([{'portfolio': 'equal', 'd': 2, 'alpha': [0.2, 0.6], 'beta': [0.0, 0.1]}])
        self.assertEqual(len(points), 1, 'Diversity parameters must not multiply other families')

    def test_blocks_merge(self):
        points = reports.expand_grids([
            {'portfolio': ['equal', 'diversity'], 'd': 2},
            {'portfolio': 'diversity', 'd': 2, 'alpha': [0.6, 1.0]},
            {'portfolio': 'diversity_dynamic', 'd': 2, 'beta': [0.0, 0.05]},
        ])
        self.assertEqual([p.portfolio for p in points], ['equal', 'diversity', 'diversity', 'diversity_dynamic', 'diversity_dynamic'])

    def test_error_path(self):
        with self.assertRaises(models.ValidationError) as context:
            reports.expand_grids([{'portfolio': 'equal'}, {'portfolio': 'equal', 'tc': [0.0, 1.5]}])
        self.assertEqual(context.exception.path, 'grids[1].tc[1]')
        with self.assertRaises(models.ValidationError) as context:
            reports.expand_grids([{'portfolio': 'equal', 'colour': 'red'}])
        self.assertEqual(context.exception.path, 'grids[0].colour')

    def test_empty(self):
        with self.assertRaises(models.ValidationError):
            reports.RunManifest(synthetic=SYNTHETIC, grids=[])
        with self.assertRaises(models.ValidationError):
            reports.expand_grids([{'portfolio': []}])

    def test_market_source(self):
        with self.assertRaises(models.ValidationError):
            reports.RunManifest(grids=[{'portfolio': 'equal'}])
        with self.assertRaises(models.ValidationError):
            reports.RunManifest(data='market.csv', synthetic=SYNTHETIC, grids=[{'portfolio': 'equal'}])
        manifest = reports.RunManifest(synthetic=SYNTHETIC, seed=9, grids={'portfolio': 'equal'})
        self.assertEqual(manifest.synthetic.seed, 9)
        self.assertEqual(len(manifest.points), 1)

    def test_overrides(self):
        overrides = reports.parse_overrides(['jobs=2', 'synthetic.n_stocks=50', 'include_index=false'])
        self.assertEqual(overrides, {'jobs': 2, 'synthetic': {'n_stocks': 50}, 'include_index': False})
        with self.assertRaises(models.ValidationError):
            reports.parse_overrides(['jobs'])


class GridRunTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        info = {
            'synthetic': SYNTHETIC,
            'grids': [{'portfolio': 'equal', 'd': 5, 'tc': [0.0, 0.005, 0.01]}],
        }
        cls.out = os.path.join(cls.tmp.name, 'results')
        cls.manifest = reports.load_manifest(write_manifest(cls.tmp.name, info))
        cls.report = reports.run_grid(cls.manifest, out=cls.out)

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_status(self):
        self.assertEqual(self.report.status, 0)
        with open(os.path.join(self.out, 'failures.json')) as handle:
            self.assertEqual(json.load(handle), [])

    def test_summary(self):
        summary = pandas.read_csv(os.path.join(self.out, 'summary.csv'), index_col='metric')
        configs = [c for c in summary.columns if not c.startswith('index_')]
        self.assertEqual(len(configs), 3)
        self.assertIn('index_d5_monthly', summary.columns)
        wealth = summary.loc['wealth', configs].astype(float).tolist()
        self.assertGreaterEqual(wealth[0], wealth[1])
        self.assertGreaterEqual(wealth[1], wealth[2])

    def test_point_files(self):
        directory = os.path.join(self.out, 'equal_d5_daily_monthly_tc0')
        with open(os.path.join(directory, 'metrics.json')) as handle:
            info = json.load(handle)
        self.assertEqual(info['metrics']['tc'], 0.0)
        self.assertEqual(info['config']['portfolio'], 'equal')
        self.assertIsNotNone(info['metrics']['excess_return'])
        frame = pandas.read_csv(os.path.join(directory, 'wealth.csv'))
        self.assertEqual(list(frame.columns), ['date', 'wealth', 'wealth_pre', 'tc', 'cumulative_tc', 'renewal'])
        self.assertEqual(len(frame), SYNTHETIC['n_days'])
        self.assertEqual(frame['wealth'].iloc[0], 1000.0)
        self.assertEqual(frame['renewal'].iloc[0], 1)

    def test_json_numbers_exact(self):
        for result in self.report.results:
            with open(os.path.join(self.out, result.config.label(), 'metrics.json')) as handle:
                info = json.load(handle)
            self.assertEqual(info['metrics'], result.metrics.to_dict())

    def test_failed_point(self):
        info = {
            'synthetic': SYNTHETIC,
            'include_index': False,
            'grids': [{'portfolio': 'equal', 'd': [5, 50]}],
        }
        out = os.path.join(self.tmp.name, 'partial')
        report = reports.run_grid(reports.load_manifest(write_manifest(self.tmp.name, info, 'partial.yml')), out=out)
        self.assertEqual(report.status, 1)
        self.assertEqual(len(report.results), 1)
        with open(os.path.join(out, 'failures.json')) as handle:
            failures = json.load(handle)
        self.assertEqual(len(failures), 1)
        self.assertEqual(failures[0]['date'], '2000-01-03')


class CommandTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_gen_digest(self):
        first = os.path.join(self.tmp.name, 'first.csv')
        second = os.path.join(self.tmp.name, 'second.csv')
        flags = ['--seed', '1', '--stocks', '3', '--days', '10']
        self.assertEqual(cli.main(['gen', '--out', first] + flags), 0)
        self.assertEqual(cli.main(['gen', '--out', second] + flags), 0)
        self.assertEqual(market.digest(first), market.digest(second))
        self.assertEqual(market.load_market_csv(first).n_stocks, 3)

    def test_gen_invalid(self):
        self.assertNotEqual(cli.main(['gen', '--out', os.path.join(self.tmp.name, 'x.csv'), '--stocks', '1']), 0)

    def test_validate(self):
        data = os.path.join(self.tmp.name, 'market.csv')
        cli.main(['gen', '--out', data, '--stocks', '4', '--days', '30'])
        self.assertEqual(cli.main(['validate', data]), 0)
        manifest = write_manifest(self.tmp.name, {'data': 'market.csv', 'grids': [{'portfolio': 'equal', 'd': 2}]})
        self.assertEqual(cli.main(['validate', manifest]), 0)
        broken = write_manifest(self.tmp.name, {'data': 'market.csv', 'grids': []}, 'broken.yml')
        self.assertNotEqual(cli.main(['validate', broken]), 0)

    def test_run(self):
        manifest = write_manifest(self.tmp.name, {'synthetic': SYNTHETIC, 'grids': [{'portfolio': 'equal', 'd': 3}]})
        out = os.path.join(self.tmp.name, 'out')
        self.assertEqual(cli.main(['run', manifest, '--out', out, '--set', 'initial_wealth=500']), 0)
        frame = pandas.read_csv(os.path.join(out, 'equal_d3_daily_monthly_tc0_v500', 'wealth.csv'))
        self.assertEqual(frame['wealth'].iloc[0], 500.0)

    def test_run_cost_override(self):
        info = {'synthetic': SYNTHETIC, 'include_index': False, 'grids': [{'portfolio': 'equal', 'd': 3, 'tc': [0.0, 0.01]}]}
        manifest = write_manifest(self.tmp.name, info)
        out = os.path.join(self.tmp.name, 'out')
        self.assertEqual(cli.main(['run', manifest, '--out', out, '--set', 'tc=0.005']), 0)
        self.assertEqual(sorted(os.listdir(out)), ['equal_d3_daily_monthly_tc0.005', 'failures.json', 'summary.csv'])

    def test_manifest_overrides(self):
        info = {'synthetic': SYNTHETIC, 'grids': [{'portfolio': 'equal'}, {'portfolio': 'entropy', 'd': 2}]}
        path = write_manifest(self.tmp.name, info)
        manifest = reports.load_manifest(path, reports.parse_overrides(['d=4', 'tc=0.01', 'jobs=2']))
        self.assertEqual(manifest.jobs, 2)
        self.assertEqual([(p.portfolio, p.d, p.tc_buy) for p in manifest.points], [('equal', 4, 0.01), ('entropy', 4, 0.01)])
        with self.assertRaises(models.ValidationError):
            reports.load_manifest(path, {'colour': 'red'})

    def test_run_empty_grid(self):
        manifest = write_manifest(self.tmp.name, {'synthetic': SYNTHETIC, 'grids': []})
        self.assertNotEqual(cli.main(['run', manifest, '--out', os.path.join(self.tmp.name, 'out')]), 0)


if __name__ == '__main__':
    unittest.main()
