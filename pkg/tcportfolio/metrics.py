"""
Summary statistics of wealth paths.

Yearly returns are simple returns of the wealth path over calendar years. Only complete years count: the
first year when the path starts in the first week of January (its base is the initial wealth), the last
year when the path reaches the last week of December, and every year in between. The reported yearly
return is the mean over complete years, the standard deviation is the sample standard deviation and the
Sharpe ratio uses the one-year risk-free yield quoted at the start of each year.
"""

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import pandas as pd

from . import log

logger = log.get_module_logger(__name__)

FIRST_WEEK_END = 7
LAST_WEEK_START = 24


@dataclass(frozen=True)
class Metrics:
    """Summary metrics of one backtest; absent values are None."""

    yearly_return: Optional[float]
    excess_return: Optional[float]
    std: Optional[float]
    sharpe: Optional[float]
    wealth: float
    tc: Optional[float]
    qv: Optional[float]
    years: int

    def to_dict(self):
        return asdict(self)


def yearly_returns(dates, wealth) -> pd.Series:
    """
    Simple returns of a wealth path over its complete calendar years.

    :param dates: dates of the path
    :param wealth: wealth per date
    :return: Series of returns indexed by year
    """
    series = pd.Series(np.asarray(wealth, dtype=float), index=pd.DatetimeIndex(dates))
    if series.empty:
        return pd.Series(dtype=float)
    closing = series.groupby(series.index.year).last()
    years = list(closing.index)
    first, last = series.index[0], series.index[-1]

    returns = {}
    for position, year in enumerate(years):
        if position == 0:
            if not (first.month == 1 and first.day <= FIRST_WEEK_END):
                continue
            base = series.iloc[0]
        else:
            base = closing.iloc[position - 1]
        if year == last.year and not (last.month == 12 and last.day >= LAST_WEEK_START):
            continue
        returns[year] = closing.iloc[position] / base - 1.0
    return pd.Series(returns, dtype=float)


def risk_free_yields(risk_free: Optional[pd.Series], years) -> pd.Series:
    """
    Yield for each year: the last quote on or before January 1st, otherwise the first quote after it.
    Without a risk-free series all yields are zero.
    """
    years = list(years)
    if risk_free is None or len(risk_free) == 0:
        return pd.Series(0.0, index=years, dtype=float)
    values = {}
    for year in years:
        start = pd.Timestamp(year=year, month=1, day=1)
        quote = risk_free.asof(start)
        if pd.isna(quote):
            later = risk_free[risk_free.index >= start]
            quote = later.iloc[0] if len(later) else risk_free.iloc[-1]
        values[year] = float(quote)
    return pd.Series(values, dtype=float)


def summarize_paths(dates, wealth, cumulative_tc=None, risk_free=None, benchmark_wealth=None, qv=None) -> Metrics:
    """
    Summary metrics of a wealth path.

    :param dates: dates of the path
    :param wealth: wealth per date
    :param cumulative_tc: cumulative transaction costs per date, None for cost-free paths
    :param risk_free: Series of annual yields indexed by date, None for zero
    :param benchmark_wealth: wealth of the benchmark on the same dates, for the excess return
    :param qv: quadratic variation of relative costs, when available
    """
    wealth = np.asarray(wealth, dtype=float)
    if wealth.size == 0:
        raise ValueError('wealth path is empty')
    returns = yearly_returns(dates, wealth)
    mean = float(returns.mean()) if len(returns) else None
    std = float(returns.std(ddof=1)) if len(returns) >= 2 else None

    sharpe = None
    if std is not None and std > 0:
        excess_over_rf = returns - risk_free_yields(risk_free, returns.index)
        sharpe = float(excess_over_rf.mean() / std)

    excess = None
    if benchmark_wealth is not None and mean is not None:
        benchmark = yearly_returns(dates, benchmark_wealth)
        if len(benchmark):
            excess = mean - float(benchmark.mean())

    tc = None if cumulative_tc is None else float(np.asarray(cumulative_tc, dtype=float)[-1])
    return Metrics(
        yearly_return=mean, excess_return=excess, std=std, sharpe=sharpe,
        wealth=float(wealth[-1]), tc=tc, qv=qv, years=len(returns),
    )


def summarize(result, risk_free=None, benchmark=None) -> Metrics:
    """
    Summary metrics of a backtest result.

    :param result: BacktestResult
    :param risk_free: Series of annual yields indexed by date, None for zero
    :param benchmark: BacktestResult of the benchmark portfolio, for the excess return
    """
    return summarize_paths(
        result.dates, result.wealth, result.cumulative_tc, risk_free=risk_free,
        benchmark_wealth=None if benchmark is None else benchmark.wealth, qv=result.qv,
    )
