"""
Deterministic synthetic market data.

Every stock gets an annual drift and volatility, an initial capitalization and a daily path of lognormal
price steps. On some days a dividend is paid on top of the price step, and with a small daily hazard the
stock delists with a final return. Capitalizations are built first and the total return is derived from
them so that the return decomposition recovers the dividend and price parts.

Random numbers come from numpy's PCG64 generator and are drawn stock by stock, then day by day, so a seed
always produces the same dataset.
"""

import numpy as np
import pandas as pd

from . import log, market, models

logger = log.get_module_logger(__name__)

TRADING_DAYS_PER_YEAR = 252


class SyntheticParams(models.Model):
    """Parameters of the synthetic market, rates are annualized fractions."""

    seed = models.Integer(default=1, min_val=0, max_val=2 ** 64 - 1, desc='Random seed')
    n_stocks = models.Integer(default=100, min_val=2, desc='Number of stocks')
    n_days = models.Integer(default=2520, min_val=2, desc='Number of business days')
    start = models.String(default='2000-01-03', desc='First date, YYYY-MM-DD')
    drift_min = models.Float(default=0.0, desc='Lowest annual drift')
    drift_max = models.Float(default=0.12, desc='Highest annual drift')
    vol_min = models.Float(default=0.15, min_val=0.0, min_open=True, desc='Lowest annual volatility')
    vol_max = models.Float(default=0.45, min_val=0.0, min_open=True, desc='Highest annual volatility')
    dividend_probability = models.Float(default=0.01, min_val=0.0, max_val=1.0, desc='Dividend chance per stock-day')
    yield_min = models.Float(default=0.001, min_val=0.0, desc='Lowest dividend yield of a payment')
    yield_max = models.Float(default=0.01, min_val=0.0, desc='Highest dividend yield of a payment')
    delisting_hazard = models.Float(default=0.0, min_val=0.0, max_val=1.0, desc='Delisting chance per stock-day')
    delisting_return_min = models.Float(default=-0.5, min_val=-1.0, desc='Lowest delisting return')
    delisting_return_max = models.Float(default=0.1, min_val=-1.0, desc='Highest delisting return')
    cap_min = models.Float(default=1e8, min_val=0.0, min_open=True, desc='Lowest initial capitalization')
    cap_max = models.Float(default=1e11, min_val=0.0, min_open=True, desc='Highest initial capitalization')

    def clean(self):
        for low, high in [('drift_min', 'drift_max'), ('vol_min', 'vol_max'), ('yield_min', 'yield_max'),
                          ('delisting_return_min', 'delisting_return_max'), ('cap_min', 'cap_max')]:
            if getattr(self, low) > getattr(self, high):
                raise models.ValidationError(low, f'must not exceed {high}')
        try:
            pd.Timestamp(self.start)
        except ValueError as err:
            raise models.ValidationError('start', f'not a date: {self.start!r}') from err


def stock_ids(n_stocks: int):
    width = max(4, len(str(n_stocks)))
    return tuple(f'S{k + 1:0{width}d}' for k in range(n_stocks))


def generate(params: SyntheticParams) -> market.MarketDataset:
    """
    Generate a dataset.

    :param params: SyntheticParams
    :return: MarketDataset
    """
    rng = np.random.Generator(np.random.PCG64(params.seed))
    n_days, n_stocks = params.n_days, params.n_stocks
    steps = n_days - 1
    caps = np.full((n_days, n_stocks), np.nan)
    returns = np.full((n_days, n_stocks), np.nan)
    delisting = np.full(n_stocks, market.NO_DELISTING)

    for k in range(n_stocks):
        drift = rng.uniform(params.drift_min, params.drift_max)
        vol = rng.uniform(params.vol_min, params.vol_max)
        cap0 = np.exp(rng.uniform(np.log(params.cap_min), np.log(params.cap_max)))
        shocks = rng.standard_normal(steps)
        paying = rng.random(steps) < params.dividend_probability
        yields = rng.uniform(params.yield_min, params.yield_max, steps)
        delists = rng.random(steps) < params.delisting_hazard
        final_return = rng.uniform(params.delisting_return_min, params.delisting_return_max)

        growth = np.exp(
            (drift - 0.5 * vol ** 2) / TRADING_DAYS_PER_YEAR + vol / np.sqrt(TRADING_DAYS_PER_YEAR) * shocks
        )
        path = cap0 * np.concatenate([[1.0], np.cumprod(growth)])
        dividends = np.where(paying, yields, 0.0)

        end = n_days
        if delists.any():
            end = int(np.flatnonzero(delists)[0]) + 1
            delisting[k] = end

        caps[:end, k] = path[:end]
        returns[0, k] = 0.0
        # total return derived from the stored capitalizations, as the decomposition reads them
        returns[1:end, k] = (caps[1:end, k] / caps[:end - 1, k] - 1.0) + dividends[:end - 1]
        if end < n_days:
            returns[end, k] = final_return

    dates = pd.bdate_range(params.start, periods=n_days)
    dataset = market.MarketDataset(dates, stock_ids(n_stocks), caps, returns, delisting)
    logger.debug(
        'Generated %d stocks over %d days (seed %d), %d delisted',
        n_stocks, n_days, params.seed, int(np.sum(delisting != market.NO_DELISTING)),
    )
    return dataset
