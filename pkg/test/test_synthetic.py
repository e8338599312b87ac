import os
import tempfile
import unittest

import numpy

from tcportfolio import market, models, synthetic


class SyntheticTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.params = synthetic.SyntheticParams(
            seed=3, n_stocks=20, n_days=400, dividend_probability=0.05, delisting_hazard=0.002,
        )
        cls.dataset = synthetic.generate(cls.params)

    def test_shape(self):
        self.assertEqual(self.dataset.n_stocks, 20)
        self.assertEqual(self.dataset.n_days, 400)
        self.assertEqual(self.dataset.stocks[0], 'S0001')
        self.assertEqual(list(self.dataset.stocks), sorted(self.dataset.stocks))

    def test_deterministic(self):
        again = synthetic.generate(self.params)
        numpy.testing.assert_array_equal(again.caps, self.dataset.caps)
        numpy.testing.assert_array_equal(again.returns, self.dataset.returns)
        other = synthetic.generate(self.params.replace(seed=4))
        self.assertFalse(numpy.array_equal(other.caps, self.dataset.caps))

    def test_serialized_bytes(self):
        with tempfile.TemporaryDirectory() as tmp:
            first = market.write_market_csv(self.dataset, os.path.join(tmp, 'first.csv'))
            second = market.write_market_csv(synthetic.generate(self.params), os.path.join(tmp, 'second.csv'))
            self.assertEqual(market.digest(first), market.digest(second))
            loaded = market.load_market_csv(first)
            numpy.testing.assert_array_equal(loaded.caps, self.dataset.caps)
            numpy.testing.assert_array_equal(loaded.returns, self.dataset.returns)

    def test_delistings(self):
        delisted = numpy.flatnonzero(self.dataset.delisting != market.NO_DELISTING)
        self.assertGreater(delisted.size, 0, 'Hazard should delist some stocks over 400 days')
        for k in delisted:
            day = self.dataset.delisting[k]
            self.assertTrue(numpy.isnan(self.dataset.caps[day:, k]).all())
            self.assertFalse(numpy.isnan(self.dataset.returns[day, k]))

    def test_decomposition_recovers_parts(self):
        rates = market.decompose(self.dataset)
        caps, returns = self.dataset.caps, self.dataset.returns
        listed = ~numpy.isnan(caps[1:]) & ~numpy.isnan(caps[:-1])
        growth = caps[1:] / caps[:-1] - 1.0
        dividend = returns[1:] - growth
        numpy.testing.assert_allclose(rates.dividend_rate[1:][listed], dividend[listed], atol=1e-12)
        numpy.testing.assert_allclose(rates.realised_rate[1:][listed], growth[listed], atol=1e-12)

    def test_no_dividends(self):
        dataset = synthetic.generate(self.params.replace(dividend_probability=0.0))
        rates = market.decompose(dataset)
        known = ~numpy.isnan(rates.dividend_rate)
        self.assertTrue(numpy.all(rates.dividend_rate[known] == 0.0))

    def test_no_delistings(self):
        dataset = synthetic.generate(self.params.replace(delisting_hazard=0.0))
        self.assertTrue(numpy.all(dataset.delisting == market.NO_DELISTING))
        self.assertFalse(numpy.isnan(dataset.caps).any())

    def test_invalid(self):
        with self.assertRaises(models.ValidationError):
            synthetic.SyntheticParams(n_stocks=1)
        with self.assertRaises(models.ValidationError):
            synthetic.SyntheticParams(vol_min=0.0)
        with self.assertRaises(models.ValidationError):
            synthetic.SyntheticParams(dividend_probability=1.5)
        with self.assertRaises(models.ValidationError) as context:
            synthetic.SyntheticParams(cap_min=1e12, cap_max=1e9)
        self.assertEqual(context.exception.path, 'cap_min')


if __name__ == '__main__':
    unittest.main()
