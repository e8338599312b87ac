"""
Dynamic convexity weight for the diversity-weighted portfolio.

A baseline portfolio with constant convexity weight ``alpha0`` is run alongside the traded one. On each
renewal day the baseline's transaction costs relative to its pre-trade wealth, averaged over the period
just ended, are compared with their average over the last four periods. More costs than usual lower the
convexity weight (slower trading), fewer costs raise it.
"""

from typing import List, Optional

import numpy as np

from . import log, models

logger = log.get_module_logger(__name__)

TRAILING_PERIODS = 4


class SmoothingError(ValueError):
    """Invalid smoothing input."""


class SmoothingConfig(models.Model):
    """
    :param alpha0: baseline convexity weight in (0, 1)
    :param beta: sensitivity of the convexity weight to relative costs
    :param xi: cap on a single day's relative transaction costs
    """

    alpha0 = models.Float(default=0.6, min_val=0.0, max_val=1.0, min_open=True, max_open=True, desc='Baseline convexity weight')
    beta = models.Float(default=0.0, min_val=0.0, desc='Sensitivity')
    xi = models.Float(default=1e-5, min_val=0.0, min_open=True, desc='Relative cost cap')


def quarterly_relative_tc(baseline_tc_path, baseline_wealth_path, window=None, xi: float = 1e-5) -> float:
    """
    Average capped relative transaction costs of the baseline portfolio over the trading days of a period.

    :param baseline_tc_path: baseline transaction costs per trading day
    :param baseline_wealth_path: baseline pre-trade wealth V(t-) per trading day
    :param window: optional (start, stop) positions selecting the period, stop excluded
    :param xi: cap applied to each day's relative cost
    """
    costs = np.asarray(baseline_tc_path, dtype=float)
    wealth = np.asarray(baseline_wealth_path, dtype=float)
    if costs.shape != wealth.shape:
        raise SmoothingError(f'cost path {costs.shape} and wealth path {wealth.shape} are not aligned')
    if window is not None:
        start, stop = window
        costs, wealth = costs[start:stop], wealth[start:stop]
    if costs.size == 0:
        raise SmoothingError('period has no trading days')
    if np.any(wealth <= 0):
        raise SmoothingError('baseline wealth must be positive')
    return float(np.mean(np.minimum(costs / wealth, xi)))


def convexity_weight(alpha0: float, beta: float, tc_bar: float) -> float:
    """``alpha0 * (1 - beta * tc_bar)`` clamped to [0, 1]."""
    return max(min(alpha0 * (1.0 - beta * tc_bar), 1.0), 0.0)


class SmoothingState(object):
    """
    Bookkeeping of the dynamic convexity weight over one backtest.

    Renewal day ``u = 0`` is the start of the backtest. Costs recorded after renewal ``u - 1`` (that day
    included) form the period closed by renewal ``u``.

    :param config: SmoothingConfig
    :param start_day: index of the first day of the backtest
    """

    def __init__(self, config: SmoothingConfig, start_day: int = 0):
        self.config = config
        self.alpha = config.alpha0
        self.renewal_days: List[int] = [start_day]
        self.averages: List[Optional[float]] = [None]
        self.counts: List[int] = [0]
        self.diagnostics: List[str] = []
        self.period_costs: List[float] = []
        self.period_wealth: List[float] = []

    @property
    def periods(self) -> int:
        """Number of completed periods, M so far."""
        return len(self.renewal_days) - 1

    def record(self, tc: float, wealth_pre: float):
        """Record one trading day of the baseline portfolio."""
        self.period_costs.append(tc)
        self.period_wealth.append(wealth_pre)

    def renew(self, day: int) -> float:
        """
        Close the current period on a renewal day and return the convexity weight effective from it.
        """
        average = quarterly_relative_tc(self.period_costs, self.period_wealth, xi=self.config.xi)
        self.renewal_days.append(day)
        self.averages.append(average)
        self.counts.append(len(self.period_costs))
        self.period_costs, self.period_wealth = [], []
        self.alpha = update_alpha(self, self.periods, self.config)
        return self.alpha


def update_alpha(state: SmoothingState, u: int, config: SmoothingConfig) -> float:
    """
    Convexity weight for renewal `u`. The average of the period ending at `u` is compared with the average
    of the four periods ``u-3 .. u``; before the fourth renewal the baseline weight is kept.

    :param state: SmoothingState with at least `u` completed periods
    :param u: renewal index
    :param config: SmoothingConfig
    """
    if u < TRAILING_PERIODS:
        return config.alpha0
    if u > state.periods:
        raise SmoothingError(f'period {u} has not been completed, only {state.periods} so far')
    trailing = sum(state.averages[u - TRAILING_PERIODS + 1:u + 1]) / TRAILING_PERIODS
    if trailing <= 0:
        message = f'no baseline costs over the four periods ending {u}, keeping alpha at {config.alpha0}'
        state.diagnostics.append(message)
        logger.warning(message)
        return config.alpha0
    tc_bar = state.averages[u] / trailing - 1.0
    return convexity_weight(config.alpha0, config.beta, tc_bar)


def qv_relative_tc(tc_path, wealth_path) -> float:
    """
    Sum of squared day-to-day changes of transaction costs relative to pre-trade wealth. The paths start
    at the initial day, whose costs count as zero.

    :param tc_path: transaction costs per day
    :param wealth_path: pre-trade wealth V(t-) per day, the denominator of the relative costs
    """
    costs = np.asarray(tc_path, dtype=float)
    wealth = np.asarray(wealth_path, dtype=float)
    if costs.ndim != 1 or costs.shape != wealth.shape:
        raise SmoothingError(f'cost path {costs.shape} and wealth path {wealth.shape} are not aligned')
    if costs.size == 0:
        return 0.0
    if np.any(wealth <= 0):
        raise SmoothingError('wealth must be positive')
    relative = costs / wealth
    relative[0] = 0.0
    return float(np.sum(np.diff(relative) ** 2))
