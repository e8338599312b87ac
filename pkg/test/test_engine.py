import typing
import unittest

import numpy
import pandas

from tcportfolio import engine, market, metrics, models, synthetic

INITIAL_WEALTH = 1000.0
PLACES = 9


def make_dataset(caps, returns=None, start='2021-03-01', delisting=None):
    """Dataset from a caps table; returns default to the capitalization changes (no dividends)."""
    caps = numpy.array(caps, dtype=float)
    if returns is None:
        returns = numpy.vstack([numpy.zeros((1, caps.shape[1])), caps[1:] / caps[:-1] - 1.0])
    stocks = tuple(f'S{k}' for k in range(caps.shape[1]))
    if delisting is None:
        delisting = numpy.full(caps.shape[1], market.NO_DELISTING)
    return market.MarketDataset(pandas.bdate_range(start, periods=caps.shape[0]), stocks, caps, returns, delisting)


def reference_equal_weight(dataset, tc, initial=INITIAL_WEALTH):
    """Step by step equal-weight backtest over the whole universe, trading daily."""
    k = dataset.n_stocks
    holdings = numpy.full(k, initial / k)
    wealth = [initial]
    for t in range(1, dataset.n_days):
        total = dataset.returns[t]
        dividend = numpy.maximum(1.0 + total - dataset.caps[t] / dataset.caps[t - 1], 0.0)
        cash = float(holdings @ dividend)
        holdings = holdings * (1.0 + total - dividend)

        def excess(value):
            change = value / k - holdings
            return (1 + tc) * change[change > 0].sum() + (1 - tc) * change[change < 0].sum() - cash

        low, high = 0.0, 2.0 * (holdings.sum() + cash)
        for _ in range(200):
            middle = 0.5 * (low + high)
            if excess(middle) < 0:
                low = middle
            else:
                high = middle
        holdings = numpy.full(k, 0.5 * (low + high) / k)
        wealth.append(holdings.sum())
    return numpy.array(wealth)


class ConfigTestCase(unittest.TestCase):

    def test_uniform_rate(self):
        config = engine.BacktestConfig(portfolio='equal', tc=0.005)
        self.assertEqual((config.tc_buy, config.tc_sell), (0.005, 0.005))
        self.assertEqual(config, engine.BacktestConfig(portfolio='equal', tc_buy=0.005, tc_sell=0.005))
        self.assertEqual(config.rates, engine.solver.CostRates.uniform(0.005))

    def test_defaults(self):
        config = engine.BacktestConfig(portfolio='diversity')
        self.assertEqual((config.d, config.initial_wealth, config.p, config.alpha, config.delta), (100, 1000.0, 0.8, 0.6, 250))
        self.assertEqual(config.diversity.p, 0.8)
        self.assertEqual(config.smoothing.alpha0, 0.6)

    def test_invalid(self):
        with self.assertRaises(models.ValidationError):
            engine.BacktestConfig(portfolio='momentum')
        with self.assertRaises(models.ValidationError):
            engine.BacktestConfig(portfolio='equal', d=1)
        with self.assertRaises(models.ValidationError):
            engine.BacktestConfig(portfolio='equal', trading_frequency='quarterly')
        with self.assertRaises(models.ValidationError) as context:
            engine.BacktestConfig(portfolio='diversity_dynamic', alpha=1.0)
        self.assertEqual(context.exception.path, 'alpha')
        self.assertEqual(engine.BacktestConfig(portfolio='diversity', alpha=1.0).alpha, 1.0)

    def test_label(self):
        label = engine.BacktestConfig(portfolio='equal', d=300, trading_frequency='weekly', tc=0.01).label()
        self.assertEqual(label, 'equal_d300_weekly_monthly_tc0.01')
        self.assertNotIn('/', engine.BacktestConfig(portfolio='diversity_dynamic', beta=0.05).label())


class CalendarTestCase(unittest.TestCase):

    def test_weekly(self):
        dates = pandas.bdate_range('2021-03-01', periods=10)
        trading, renewal = engine.build_calendar(dates, 'weekly', 'monthly')
        self.assertEqual(list(engine.period_ends(dates, 'weekly')), [4, 9])
        self.assertEqual(list(renewal), [9])
        self.assertEqual(list(trading), [4, 9])

    def test_daily(self):
        dates = pandas.bdate_range('2021-03-01', periods=10)
        trading, _ = engine.build_calendar(dates, 'daily', 'weekly')
        self.assertEqual(list(trading), list(range(10)))

    def test_renewal_forced(self):
        dates = pandas.bdate_range('2021-01-01', '2021-03-31')
        trading, renewal = engine.build_calendar(dates, 'monthly', 'monthly')
        self.assertEqual(len(renewal), 3)
        self.assertEqual(list(dates[renewal].month), [1, 2, 3])
        trading, renewal = engine.build_calendar(dates, 'monthly', 'weekly')
        self.assertTrue(set(renewal) <= set(trading), 'Renewal days must be trading days')
        self.assertEqual(len(engine.period_ends(dates, 'quarterly')), 1)


class ConstituentTestCase(unittest.TestCase):

    def test_largest(self):
        self.assertEqual(list(engine.renew_constituents([5.0, 3.0, 9.0], 2).members), [0, 2])

    def test_ties(self):
        self.assertEqual(list(engine.renew_constituents([4.0, 4.0, 4.0], 2).members), [0, 1])

    def test_whole_universe(self):
        self.assertEqual(list(engine.renew_constituents([4.0, numpy.nan, 1.0, 2.0], 3, 7).members), [0, 2, 3])

    def test_too_few(self):
        with self.assertRaises(engine.BacktestError):
            engine.renew_constituents([4.0, numpy.nan, 1.0], 3)

    def test_survivors(self):
        constituents = engine.ConstituentList(numpy.array([0, 2, 3]), 0)
        survivors = constituents.survivors(numpy.array([True, True, False, True]))
        self.assertEqual(list(survivors.members), [0, 3])


class IndexTestCase(unittest.TestCase):

    def test_homogeneity(self):
        dataset = make_dataset([[100.0, 50.0, 10.0], [200.0, 100.0, 20.0]])
        level = engine.capitalization_index(dataset, 2, [1])
        self.assertEqual(level[0], 1000.0)
        self.assertAlmostEqual(level[1], 2000.0, places=9)

    def test_single_stock(self):
        dataset = make_dataset([[100.0, 50.0], [110.0, 40.0], [121.0, 30.0]])
        level = engine.capitalization_index(dataset, 1, [2])
        numpy.testing.assert_allclose(level, [1000.0, 1100.0, 1210.0], rtol=1e-12)


class BacktestTestCase(unittest.TestCase):

    def run_config(self, dataset, **kwargs):
        return engine.run_backtest(engine.BacktestConfig(**kwargs), dataset)

    def test_hand_rebalance(self):
        dataset = make_dataset([[100.0, 100.0], [120.0, 80.0]])
        result = self.run_config(dataset, portfolio='equal', d=2, tc=0.01)
        self.assertEqual(result.wealth[0], INITIAL_WEALTH)
        self.assertAlmostEqual(result.wealth_pre[1], 1000.0, places=PLACES)
        self.assertAlmostEqual(result.tc[1], 2.0, places=PLACES)
        self.assertAlmostEqual(result.wealth[1], 998.0, places=PLACES)
        self.assertAlmostEqual(result.cumulative_tc[-1], 2.0, places=PLACES)

    def test_dividends_reinvested(self):
        dataset = make_dataset([[100.0, 100.0], [100.0, 100.0]], returns=[[0.0, 0.0], [0.01, 0.0]])
        result = self.run_config(dataset, portfolio='equal', d=2)
        self.assertAlmostEqual(result.wealth[1], 1005.0, places=PLACES)
        self.assertAlmostEqual(result.trades['dividends'].iloc[1], 5.0, places=PLACES)

    def test_delisting(self):
        nan = numpy.nan
        caps = [[100, 50, 10], [100, 50, 10], [100, nan, 10], [100, nan, 10], [100, nan, 10]]
        returns = [[0, 0, 0], [0, 0, 0], [0, -0.5, 0], [0, nan, 0], [0, nan, 0]]
        dataset = make_dataset(caps, returns, delisting=numpy.array([-1, 2, -1]))
        result = self.run_config(dataset, portfolio='equal', d=2)
        numpy.testing.assert_allclose(result.wealth, [1000, 1000, 750, 750, 750], rtol=1e-12)
        self.assertEqual(list(result.trades['members']), [2, 2, 1, 1, 2])

    def test_index_tracking_holds(self):
        caps = [[100, 50, 10], [110, 50, 11], [105, 55, 12], [100, 60, 10], [120, 60, 10]]
        dataset = make_dataset(caps)
        result = self.run_config(dataset, portfolio='index_tracking', d=3)
        self.assertEqual(list(result.trades['traded']), [True, False, False, False, True])
        expected = INITIAL_WEALTH * numpy.array(caps, dtype=float).sum(axis=1) / 160.0
        numpy.testing.assert_allclose(result.wealth, expected, rtol=1e-12)
        self.assertEqual(result.cumulative_tc[-1], 0.0)

    def test_index_tracking_reinvests(self):
        caps = [[100, 50], [100, 50], [100, 50]]
        returns = [[0, 0], [0.01, 0], [0, 0]]
        result = self.run_config(make_dataset(caps, returns), portfolio='index_tracking', d=2, tc=0.01)
        self.assertEqual(list(result.trades['traded']), [True, True, True])
        self.assertGreater(result.tc[1], 0.0)

    def test_non_trading_days(self):
        caps = [[100, 100]] * 5
        returns = [[0, 0], [0.02, 0], [0, 0], [0, 0], [0, 0]]
        result = self.run_config(make_dataset(caps, returns), portfolio='equal', d=2, trading_frequency='weekly')
        self.assertEqual(len(result.trades), 2)
        self.assertAlmostEqual(result.wealth[1], 1010.0, places=PLACES)
        self.assertAlmostEqual(result.wealth_pre[1], 1000.0, places=PLACES)
        self.assertAlmostEqual(result.wealth[4], 1010.0, places=PLACES)

    def test_not_enough_stocks(self):
        with self.assertRaises(engine.BacktestError) as context:
            self.run_config(make_dataset([[100.0, 50.0], [100.0, 50.0]]), portfolio='equal', d=3)
        self.assertEqual(context.exception.date, pandas.Timestamp('2021-03-01'))

    def test_frame(self):
        result = self.run_config(make_dataset([[100.0, 100.0], [120.0, 80.0]]), portfolio='equal', d=2)
        frame = result.to_frame()
        self.assertEqual(list(frame.columns), ['date', 'wealth', 'wealth_pre', 'tc', 'cumulative_tc', 'renewal'])
        self.assertEqual(frame['date'].iloc[0], '2021-03-01')
        self.assertEqual(frame['renewal'].iloc[0], 1, 'The first day builds the constituent list')
        self.assertIsNone(result.baseline_relative_tc)

    def test_result_annotations(self):
        hints = typing.get_type_hints(engine.BacktestResult)
        self.assertEqual(hints['metrics'], typing.Optional[metrics.Metrics])


class SyntheticBacktestTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tiny = synthetic.generate(synthetic.SyntheticParams(seed=1, n_stocks=3, n_days=10, dividend_probability=0.3))
        cls.dataset = synthetic.generate(synthetic.SyntheticParams(
            seed=5, n_stocks=8, n_days=300, dividend_probability=0.02, delisting_hazard=0.0,
        ))

    def test_reference_trace(self):
        result = engine.run_backtest(engine.BacktestConfig(portfolio='equal', d=3, tc=0.01), self.tiny)
        numpy.testing.assert_allclose(result.wealth, reference_equal_weight(self.tiny, 0.01), rtol=1e-9)

    def test_cost_monotonicity(self):
        terminal = [
            engine.run_backtest(engine.BacktestConfig(portfolio='equal', d=3, tc=tc), self.tiny).wealth[-1]
            for tc in (0.0, 0.005, 0.01)
        ]
        self.assertGreater(terminal[0], terminal[1])
        self.assertGreater(terminal[1], terminal[2])

    def test_self_financing_paths(self):
        for kind in ('index_tracking', 'equal', 'entropy', 'diversity'):
            config = engine.BacktestConfig(portfolio=kind, d=5, tc=0.005, delta=20)
            result = engine.run_backtest(config, self.dataset)
            self.assertTrue(numpy.all(result.wealth > 0), kind)
            numpy.testing.assert_allclose(result.cumulative_tc, numpy.cumsum(result.tc), rtol=1e-12, atol=1e-12)
            self.assertGreaterEqual(result.qv, 0.0)
            self.assertIsNotNone(result.metrics)

    def test_zero_beta_matches_constant(self):
        base = dict(d=5, tc=0.005, delta=20, alpha=0.6)
        constant = engine.run_backtest(engine.BacktestConfig(portfolio='diversity', **base), self.dataset)
        dynamic = engine.run_backtest(engine.BacktestConfig(portfolio='diversity_dynamic', beta=0.0, **base), self.dataset)
        numpy.testing.assert_array_equal(constant.wealth, dynamic.wealth)
        numpy.testing.assert_array_equal(dynamic.alpha, 0.6)
        self.assertIn('alpha', dynamic.to_frame().columns)
        numpy.testing.assert_array_equal(dynamic.baseline_relative_tc, constant.tc / constant.wealth_pre)
        frame = dynamic.to_frame()
        self.assertEqual(list(frame.columns)[-2:], ['alpha', 'baseline_relative_tc'])
        numpy.testing.assert_array_equal(frame['renewal'].to_numpy(), constant.renewal.astype(int))

    def test_dynamic_alpha_bounds(self):
        config = engine.BacktestConfig(
            portfolio='diversity_dynamic', d=5, tc=0.01, delta=20, beta=50.0, renewing_frequency='weekly'
        )
        result = engine.run_backtest(config, self.dataset)
        self.assertTrue(numpy.all((result.alpha >= 0.0) & (result.alpha <= 1.0)))


if __name__ == '__main__':
    unittest.main()
