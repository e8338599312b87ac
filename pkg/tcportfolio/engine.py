"""
Backtest engine.

A backtest starts at the first date of the dataset by investing the initial wealth in the target weights
of the top-d stocks (the initial costs are sunk). Every following day holdings accrue with the realised
rates and dividends are collected as cash. On trading days the targets of the portfolio family are
computed over the current constituent list and the portfolio is rebalanced to them, self-financing and
net of proportional costs. Renewal days rebuild the constituent list; in between, delisted stocks leave
the list and are liquidated at the next trade.

The index tracking portfolio only trades on renewal days, when dividends are waiting to be reinvested or
when a held stock has left the list. The dynamic diversity portfolio is run together with a baseline
portfolio of constant convexity weight whose costs drive the convexity weight of the traded one.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from . import log, market, metrics, models, portfolios, smoothing, solver
from .metrics import Metrics

logger = log.get_module_logger(__name__)

SELF_FINANCING_TOLERANCE = 1e-9
PERIOD_CODES = {
    'weekly': 'W',
    'monthly': 'M',
    'quarterly': 'Q',
}
DIVERSITY_KINDS = ('diversity', 'diversity_dynamic')


class BacktestError(RuntimeError):
    """
    Failure during a backtest.

    :param message: description
    :param date: date at which the backtest failed
    :param stock: stock identifier involved, when known
    """

    def __init__(self, message, date=None, stock=None):
        self.date = date
        self.stock = stock
        context = []
        if date is not None:
            context.append(f'{pd.Timestamp(date):%Y-%m-%d}')
        if stock is not None:
            context.append(f'stock {stock}')
        prefix = f'[{", ".join(context)}] ' if context else ''
        super(BacktestError, self).__init__(f'{prefix}{message}')


class BacktestConfig(models.Model):
    """
    Configuration of one backtest.

    The uniform rate `tc` is a shortcut for equal buying and selling rates. For the diversity families
    `alpha` is the convexity weight; for the dynamic family it is the baseline weight alpha0.
    """

    portfolio = models.Choice(choices=models.PORTFOLIO_KINDS, required=True, desc='Portfolio family')
    d = models.Integer(default=100, min_val=2, desc='Constituent list size')
    trading_frequency = models.Choice(default='daily', choices=models.TRADING_FREQUENCIES, desc='Trading frequency')
    renewing_frequency = models.Choice(default='monthly', choices=models.RENEWING_FREQUENCIES, desc='Renewing frequency')
    tc = models.Float(min_val=0.0, max_val=1.0, max_open=True, desc='Uniform cost rate')
    tc_buy = models.Float(default=0.0, min_val=0.0, max_val=1.0, max_open=True, desc='Buying cost rate')
    tc_sell = models.Float(default=0.0, min_val=0.0, max_val=1.0, max_open=True, desc='Selling cost rate')
    initial_wealth = models.Float(default=1000.0, min_val=0.0, min_open=True, desc='Initial wealth')
    p = models.Float(default=0.8, min_val=0.0, max_val=1.0, min_open=True, max_open=True, desc='Diversity degree')
    alpha = models.Float(default=0.6, min_val=0.0, max_val=1.0, desc='Convexity weight')
    delta = models.Integer(default=250, min_val=1, desc='Moving average window')
    beta = models.Float(default=0.0, min_val=0.0, desc='Convexity weight sensitivity')
    xi = models.Float(default=1e-5, min_val=0.0, min_open=True, desc='Relative cost cap')

    def clean(self):
        if self.tc is not None:
            self.tc_buy = self.tc_sell = self.tc
            self.tc = None
        if self.portfolio == 'diversity_dynamic' and not 0 < self.alpha < 1:
            raise models.ValidationError('alpha', f'baseline convexity weight must be in (0, 1), got {self.alpha!r}')

    @property
    def rates(self) -> solver.CostRates:
        return solver.CostRates(tc_buy=self.tc_buy, tc_sell=self.tc_sell)

    @property
    def diversity(self) -> portfolios.DiversityConfig:
        return portfolios.DiversityConfig(p=self.p, alpha=self.alpha, delta=self.delta)

    @property
    def smoothing(self) -> smoothing.SmoothingConfig:
        return smoothing.SmoothingConfig(alpha0=self.alpha, beta=self.beta, xi=self.xi)

    def label(self) -> str:
        """Short name usable as a directory name."""
        parts = [self.portfolio, f'd{self.d}', self.trading_frequency, self.renewing_frequency]
        if self.tc_buy == self.tc_sell:
            parts.append(f'tc{self.tc_buy:g}')
        else:
            parts.append(f'tcb{self.tc_buy:g}-tcs{self.tc_sell:g}')
        if self.portfolio in DIVERSITY_KINDS:
            parts.extend([f'p{self.p:g}', f'a{self.alpha:g}', f'w{self.delta}'])
        if self.portfolio == 'diversity_dynamic':
            parts.extend([f'b{self.beta:g}', f'xi{self.xi:g}'])
        if self.initial_wealth != 1000.0:
            parts.append(f'v{self.initial_wealth:g}')
        return '_'.join(parts)


@dataclass(frozen=True)
class ConstituentList:
    """
    Stocks currently traded.

    :param members: sorted stock positions in the dataset
    :param effective_from: index of the renewal day that built the list
    """

    members: np.ndarray
    effective_from: int

    def survivors(self, listed: np.ndarray) -> 'ConstituentList':
        """The list without the members that are no longer listed."""
        return ConstituentList(self.members[listed[self.members]], self.effective_from)


@dataclass
class BacktestResult:
    """
    Paths of one backtest, one entry per date.

    `wealth` is post-trade wealth on trading days and holdings plus collected dividends on other days;
    `wealth_pre` is the invested wealth before trading, V(t-). `renewal` flags the days the constituent
    list was built, the first day included. The baseline paths are only kept for the dynamic family.
    """

    config: BacktestConfig
    dates: pd.DatetimeIndex
    wealth: np.ndarray
    tc: np.ndarray
    cumulative_tc: np.ndarray
    wealth_pre: np.ndarray
    renewal: Optional[np.ndarray] = None
    alpha: Optional[np.ndarray] = None
    baseline_tc: Optional[np.ndarray] = None
    baseline_wealth_pre: Optional[np.ndarray] = None
    trades: pd.DataFrame = field(default_factory=pd.DataFrame)
    qv: Optional[float] = None
    metrics: Optional[Metrics] = None

    @property
    def baseline_relative_tc(self) -> Optional[np.ndarray]:
        """Costs of the baseline book relative to its wealth before trading."""
        if self.baseline_tc is None:
            return None
        return self.baseline_tc / self.baseline_wealth_pre

    def to_frame(self) -> pd.DataFrame:
        """
        Daily paths: wealth before and after trading, costs, renewal flags and, for the dynamic family, the
        convexity weight and the baseline's relative costs.
        """
        frame = pd.DataFrame({
            'date': self.dates.strftime(market.DATE_FORMAT),
            'wealth': self.wealth,
            'wealth_pre': self.wealth_pre,
            'tc': self.tc,
            'cumulative_tc': self.cumulative_tc,
        })
        if self.renewal is not None:
            frame['renewal'] = self.renewal.astype(int)
        if self.alpha is not None:
            frame['alpha'] = self.alpha
        if self.baseline_tc is not None:
            frame['baseline_relative_tc'] = self.baseline_relative_tc
        return frame


def period_ends(dates, frequency: str) -> np.ndarray:
    """Positions of the last available date of every week, month or quarter; every position when daily."""
    dates = pd.DatetimeIndex(dates)
    if frequency == 'daily':
        return np.arange(len(dates))
    if len(dates) == 0:
        return np.arange(0)
    periods = dates.to_period(PERIOD_CODES[frequency])
    last = np.append(np.asarray(periods[1:] != periods[:-1]), True)
    return np.flatnonzero(last)


def build_calendar(dates, trading_frequency: str, renewing_frequency: str):
    """
    Trading and renewal days of a date sequence. Renewal days are always trading days.

    :return: (trading_days, renewal_days) as sorted arrays of date positions
    """
    renewal_days = period_ends(dates, renewing_frequency)
    trading_days = np.union1d(period_ends(dates, trading_frequency), renewal_days)
    return trading_days, renewal_days


def renew_constituents(caps_on_day, d: int, effective_from: int = 0) -> ConstituentList:
    """
    The `d` listed stocks with the largest capitalizations, ties broken by stock position.

    :param caps_on_day: capitalizations of all stocks on the day, NaN when not listed
    :param d: list size
    :param effective_from: day index the list is built on
    """
    caps = np.asarray(caps_on_day, dtype=float)
    listed = np.flatnonzero(~np.isnan(caps))
    if d < 1:
        raise BacktestError(f'constituent list size must be positive, got {d}')
    if listed.size < d:
        raise BacktestError(f'only {listed.size} listed stocks, the constituent list needs {d}')
    ranked = listed[np.lexsort((listed, -caps[listed]))]
    return ConstituentList(np.sort(ranked[:d]), effective_from)


def capitalization_index(dataset: market.MarketDataset, d: int, renewal_days, initial_level: float = 1000.0) -> np.ndarray:
    """
    Cost-free, dividend-free index: total capitalization of the current constituent list, scaled so the
    first day equals `initial_level`.
    """
    renewal = np.zeros(dataset.n_days, dtype=bool)
    renewal[np.asarray(renewal_days, dtype=int)] = True
    constituents = renew_constituents(dataset.caps_on(0), d, 0)
    base = dataset.caps[0, constituents.members].sum()
    level = np.empty(dataset.n_days)
    level[0] = initial_level
    for day in range(1, dataset.n_days):
        if renewal[day]:
            constituents = renew_constituents(dataset.caps_on(day), d, day)
        else:
            constituents = constituents.survivors(dataset.listed_on(day))
        level[day] = dataset.caps[day, constituents.members].sum() * initial_level / base
    return level


class Book(object):
    """
    Holdings of one portfolio over the whole stock universe.

    :param n_stocks: universe size
    :param rates: CostRates
    """

    def __init__(self, n_stocks: int, rates: solver.CostRates):
        self.holdings = np.zeros(n_stocks)
        self.cash = 0.0
        self.rates = rates
        self.cumulative_tc = 0.0

    @property
    def invested(self) -> float:
        return float(self.holdings.sum())

    def invest(self, targets, wealth):
        """Initial purchase, costs are sunk."""
        self.holdings = wealth * np.asarray(targets, dtype=float)

    def accrue(self, day: int, rates: market.ReturnDecomposition):
        """Grow holdings and collect dividends over one day."""
        held = np.flatnonzero(self.holdings)
        if held.size == 0:
            return
        accrued = market.accrue(self.holdings[held], rates.dividend_rate[day, held], rates.realised_rate[day, held])
        self.cash += accrued.dividends_accumulated
        self.holdings[held] = accrued.holdings_pre_trade

    def holds_outside(self, members) -> bool:
        """True when some holding is not in the constituent list."""
        outside = self.holdings.copy()
        outside[members] = 0.0
        return bool(np.any(outside > 0))

    def trade(self, targets):
        """
        Rebalance to universe-wide target weights.

        :return: (RebalanceProblem, RebalanceOutcome)
        """
        involved = np.flatnonzero((self.holdings > 0) | (targets > 0))
        problem = solver.RebalanceProblem(self.holdings[involved], self.cash, targets[involved], self.rates)
        outcome = solver.rebalance(problem)

        wealth_prev = problem.wealth_prev
        error = solver.self_financing_residual(problem, outcome)
        if abs(error) > SELF_FINANCING_TOLERANCE * wealth_prev:
            raise solver.SolverError(f'self-financing residual {error!r} exceeds tolerance')
        expected = wealth_prev + problem.dividends - outcome.transaction_costs
        if abs(outcome.wealth_new - expected) > SELF_FINANCING_TOLERANCE * (wealth_prev + problem.dividends):
            raise solver.SolverError(f'wealth {outcome.wealth_new!r} does not match {expected!r}')

        holdings = np.zeros_like(self.holdings)
        holdings[involved] = outcome.holdings_new
        self.holdings = holdings
        self.cash = 0.0
        self.cumulative_tc += outcome.transaction_costs
        return problem, outcome


class Backtest(object):
    """
    One backtest of a configuration over a dataset.

    :param config: BacktestConfig
    :param dataset: MarketDataset
    :param decomposition: precomputed ReturnDecomposition of the dataset, computed when missing
    :param risk_free: Series of annual yields for the Sharpe ratio, zero when missing
    """

    def __init__(self, config: BacktestConfig, dataset: market.MarketDataset, decomposition=None, risk_free=None):
        self.config = config
        self.dataset = dataset
        self.rates = decomposition if decomposition is not None else market.decompose(dataset)
        self.risk_free = risk_free
        self.kind = config.portfolio
        self.dynamic = self.kind == 'diversity_dynamic'
        self.trading_days, self.renewal_days = build_calendar(
            dataset.dates, config.trading_frequency, config.renewing_frequency
        )
        self.diversity = config.diversity if self.kind in DIVERSITY_KINDS else None
        self.average = portfolios.MovingAverage(config.delta) if self.diversity else None
        self.state = smoothing.SmoothingState(config.smoothing) if self.dynamic else None

    def member_weights(self, day, members) -> np.ndarray:
        if members.size == 1:
            return np.ones(1)
        return portfolios.market_weights(self.dataset.caps[day, members])

    def targets(self, mu, members, alpha) -> np.ndarray:
        """Universe-wide target weights of the portfolio family."""
        weights = np.zeros(self.dataset.n_stocks)
        if members.size == 1:
            weights[members] = 1.0
            return weights
        mu_bar = None
        if self.diversity:
            lam = self.average.value()[members]
            total = lam.sum()
            lam = lam / total if total > 0 else mu
            mu_bar = portfolios.smoothed_weights(mu, lam, alpha).blended
        try:
            weights[members] = portfolios.generate_targets(self.kind, mu, mu_bar, self.diversity, alpha)
        except portfolios.NegativeWeightError as err:
            raise portfolios.NegativeWeightError(self.dataset.stocks[members[err.stock]], err.value) from err
        return weights

    def must_trade(self, book: Book, constituents: ConstituentList, renewal: bool) -> bool:
        if self.kind != 'index_tracking':
            return True
        return renewal or book.cash > 0 or book.holds_outside(constituents.members)

    def run(self) -> BacktestResult:
        config, dataset = self.config, self.dataset
        n_days = dataset.n_days
        logger.info('Backtest %s over %d days', config.label(), n_days)

        trading = np.zeros(n_days, dtype=bool)
        trading[self.trading_days] = True
        renewal = np.zeros(n_days, dtype=bool)
        renewal[self.renewal_days] = True

        wealth = np.empty(n_days)
        wealth_pre = np.empty(n_days)
        costs = np.zeros(n_days)
        cumulative = np.zeros(n_days)
        shadow_pre = np.empty(n_days) if self.dynamic else None
        shadow_costs = np.zeros(n_days) if self.dynamic else None
        alphas = np.full(n_days, config.alpha) if self.dynamic else None
        trades = []

        book = Book(dataset.n_stocks, config.rates)
        shadow = Book(dataset.n_stocks, config.rates) if self.dynamic else None
        alpha = config.alpha
        day = 0
        try:
            constituents = renew_constituents(dataset.caps_on(0), config.d, 0)
            mu = self.member_weights(0, constituents.members)
            self._observe(mu, constituents.members)
            book.invest(self.targets(mu, constituents.members, alpha), config.initial_wealth)
            if self.dynamic:
                shadow.invest(book.holdings / config.initial_wealth, config.initial_wealth)
                self.state.record(0.0, config.initial_wealth)
                shadow_pre[0] = config.initial_wealth
            wealth[0] = wealth_pre[0] = config.initial_wealth
            trades.append(self._log_entry(0, True, True, 0.0, 0.0, config.initial_wealth, config.initial_wealth, constituents, 1.0))

            for day in range(1, n_days):
                book.accrue(day, self.rates)
                if self.dynamic:
                    shadow.accrue(day, self.rates)
                    shadow_pre[day] = shadow.invested
                wealth_pre[day] = book.invested

                if not trading[day]:
                    wealth[day] = wealth_pre[day] + book.cash
                    cumulative[day] = book.cumulative_tc
                    if self.dynamic:
                        alphas[day] = alpha
                    continue

                if renewal[day]:
                    previous = constituents.members
                    constituents = renew_constituents(dataset.caps_on(day), config.d, day)
                    logger.debug(
                        '%s: renewed list, %d in, %d out', dataset.dates[day].date(),
                        np.setdiff1d(constituents.members, previous).size,
                        np.setdiff1d(previous, constituents.members).size,
                    )
                    if self.dynamic:
                        alpha = self.state.renew(day)
                else:
                    constituents = constituents.survivors(dataset.listed_on(day))
                if constituents.members.size == 0:
                    raise BacktestError('every constituent has been delisted')

                if self.dynamic:
                    alphas[day] = alpha
                dividends = book.cash
                if not self.must_trade(book, constituents, renewal[day]):
                    wealth[day] = wealth_pre[day]
                    cumulative[day] = book.cumulative_tc
                    trades.append(self._log_entry(day, False, renewal[day], 0.0, 0.0, wealth_pre[day], wealth[day], constituents, 1.0))
                    continue

                mu = self.member_weights(day, constituents.members)
                self._observe(mu, constituents.members)
                _, outcome = book.trade(self.targets(mu, constituents.members, alpha))
                if self.dynamic:
                    shadow_problem, shadow_outcome = shadow.trade(self.targets(mu, constituents.members, config.alpha))
                    self.state.record(shadow_outcome.transaction_costs, shadow_problem.wealth_prev)
                    shadow_costs[day] = shadow_outcome.transaction_costs

                costs[day] = outcome.transaction_costs
                wealth[day] = outcome.wealth_new
                cumulative[day] = book.cumulative_tc
                trades.append(self._log_entry(
                    day, True, renewal[day], outcome.transaction_costs, dividends, wealth_pre[day], outcome.wealth_new,
                    constituents, outcome.scale,
                ))
        except (solver.SolverError, market.DataError, portfolios.WeightError, smoothing.SmoothingError) as err:
            stock = getattr(err, 'stock', None)
            raise BacktestError(str(err), date=dataset.dates[day], stock=stock) from err
        except BacktestError as err:
            if err.date is not None:
                raise
            raise BacktestError(str(err), date=dataset.dates[day]) from err

        qv = smoothing.qv_relative_tc(costs, shadow_pre if self.dynamic else wealth_pre)
        renewed = renewal.copy()
        renewed[0] = True
        result = BacktestResult(
            config=config, dates=dataset.dates, wealth=wealth, tc=costs, cumulative_tc=cumulative,
            wealth_pre=wealth_pre, renewal=renewed, alpha=alphas, baseline_tc=shadow_costs,
            baseline_wealth_pre=shadow_pre, trades=pd.DataFrame(trades), qv=qv,
        )
        result.metrics = metrics.summarize(result, risk_free=self.risk_free)
        logger.info(
            'Backtest %s finished: wealth %.2f, cumulative costs %.2f', config.label(), wealth[-1], cumulative[-1]
        )
        return result

    def _observe(self, mu, members):
        if self.average is not None:
            observation = np.zeros(self.dataset.n_stocks)
            observation[members] = mu
            self.average.push(observation)

    def _log_entry(self, day, traded, renewal, tc, dividends, wealth_pre, wealth, constituents, scale):
        return {
            'date': self.dataset.dates[day],
            'traded': bool(traded),
            'renewal': bool(renewal),
            'tc': tc,
            'dividends': dividends,
            'wealth_pre': wealth_pre,
            'wealth': wealth,
            'members': int(constituents.members.size),
            'scale': scale,
        }


def run_backtest(config: BacktestConfig, dataset: market.MarketDataset, risk_free=None, decomposition=None) -> BacktestResult:
    """
    Run one backtest.

    :param config: BacktestConfig
    :param dataset: MarketDataset
    :param risk_free: Series of annual yields for the Sharpe ratio, zero when missing
    :param decomposition: precomputed ReturnDecomposition of the dataset
    :return: BacktestResult with metrics (without excess return, which needs a benchmark)
    """
    return Backtest(config, dataset, decomposition=decomposition, risk_free=risk_free).run()
