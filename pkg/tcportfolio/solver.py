"""
Self-financing rebalancing under proportional transaction costs.

After a rebalance the holdings must match the target weights exactly, while the currency spent on
purchases (plus buying costs) equals the currency raised by sales (net of selling costs) plus the
dividends waiting to be reinvested. Every post-trade holding is therefore of the form
``psi_j = c * V(t-) * pi_j`` and the problem reduces to finding the scale ``c``.

Two solvers are provided. :func:`solve_scale_analytic` evaluates the closed form at the pivot
breakpoint and is the one used by :func:`rebalance`. :func:`solve_scale_numeric` bisects the
piecewise-linear residual and serves as an independent check.
"""

from dataclasses import dataclass

import numpy as np

from . import log, models

logger = log.get_module_logger(__name__)

WEIGHT_TOLERANCE = 1e-9
BISECTION_TOLERANCE = 1e-13
MAX_DOUBLINGS = 64


class SolverError(ValueError):
    """Invalid rebalance problem or solver failure."""


class CostRates(models.Model):
    """
    Proportional transaction cost rates.

    :param tc_buy: fraction of each unit of currency bought paid as costs, in [0, 1)
    :param tc_sell: fraction of each unit of currency sold paid as costs, in [0, 1)
    """

    tc_buy = models.Float(default=0.0, min_val=0.0, max_val=1.0, max_open=True, desc='Buying cost rate')
    tc_sell = models.Float(default=0.0, min_val=0.0, max_val=1.0, max_open=True, desc='Selling cost rate')

    @classmethod
    def uniform(cls, tc):
        """Same rate for buying and selling."""
        return cls(tc_buy=tc, tc_sell=tc)

    @property
    def buy_factor(self):
        return 1.0 + self.tc_buy

    @property
    def sell_factor(self):
        return 1.0 - self.tc_sell


@dataclass(frozen=True)
class RebalanceProblem:
    """
    Inputs of one rebalance. Arrays are converted to float and validated on creation; targets whose sum
    is within 1e-9 of one are renormalised, anything further off is rejected.

    :param holdings_prev: currency held in each stock just before trading, psi(t-)
    :param dividends: dividend cash waiting to be reinvested, D(t-)
    :param targets: target weights, same length as the holdings
    :param rates: cost rates
    """

    holdings_prev: np.ndarray
    dividends: float
    targets: np.ndarray
    rates: CostRates

    def __post_init__(self):
        holdings = np.asarray(self.holdings_prev, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        dividends = float(self.dividends)

        if holdings.ndim != 1 or holdings.size == 0:
            raise SolverError('holdings must be a non-empty vector')
        if targets.shape != holdings.shape:
            raise SolverError(f'targets have shape {targets.shape}, holdings have shape {holdings.shape}')
        if not np.all(np.isfinite(holdings)) or np.any(holdings < 0):
            raise SolverError('holdings must be finite and nonnegative')
        wealth = holdings.sum()
        if not wealth > 0:
            raise SolverError(f'pre-trade wealth must be positive, got {wealth!r}')
        if not np.isfinite(dividends) or dividends < 0:
            raise SolverError(f'dividends must be finite and nonnegative, got {dividends!r}')
        if not np.all(np.isfinite(targets)) or np.any(targets < 0):
            raise SolverError('target weights must be finite and nonnegative')
        total = targets.sum()
        if total == 0:
            raise SolverError('target weights are all zero')
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise SolverError(f'target weights sum to {total!r}, expected 1')
        if not isinstance(self.rates, CostRates):
            raise SolverError('rates must be a CostRates instance')

        object.__setattr__(self, 'holdings_prev', holdings)
        object.__setattr__(self, 'targets', targets / total)
        object.__setattr__(self, 'dividends', dividends)

    @property
    def wealth_prev(self) -> float:
        """V(t-), total currency invested before trading, dividends excluded."""
        return float(self.holdings_prev.sum())

    @property
    def weights_prev(self) -> np.ndarray:
        """Portfolio weights just before trading, pi(t-)."""
        return self.holdings_prev / self.wealth_prev


@dataclass(frozen=True)
class SolverBreakpointState:
    """
    Breakpoint quantities of the scale equation. `pivot_index` is a 0-based position in the problem's
    vectors. The aggregates are evaluated at the pivot.
    """

    weight_ratios: np.ndarray
    normalized_dividend: float
    gap_values: np.ndarray
    pivot_index: int
    buy_weight: float
    sell_weight: float
    buy_value: float
    sell_value: float

    @property
    def scale(self) -> float:
        return (self.buy_value + self.sell_value + self.normalized_dividend) / (self.buy_weight + self.sell_weight)


@dataclass(frozen=True)
class RebalanceOutcome:
    """
    Result of one rebalance.

    :param holdings_new: currency held in each stock after trading, psi(t)
    :param scale: the scale factor c
    :param transaction_costs: costs paid, TC(t)
    :param wealth_new: V(t)
    :param bought: currency spent on purchases, costs excluded
    :param sold: currency value of sales, costs included
    """

    holdings_new: np.ndarray
    scale: float
    transaction_costs: float
    wealth_new: float
    bought: float
    sold: float


def weight_ratios(problem: RebalanceProblem) -> np.ndarray:
    """c_i = pi_i(t-) / pi_i(t) for stocks with a positive target, 0 for the others."""
    ratios = np.zeros_like(problem.targets)
    held = problem.targets > 0
    ratios[held] = problem.weights_prev[held] / problem.targets[held]
    return ratios


def normalized_dividend(problem: RebalanceProblem) -> float:
    """
    Cash available before any purchase, relative to V(t-): the dividends plus the net proceeds of
    liquidating every position whose target weight is zero.
    """
    wealth = problem.wealth_prev
    if not wealth > 0:
        raise SolverError(f'pre-trade wealth must be positive, got {wealth!r}')
    liquidated = problem.holdings_prev[problem.targets == 0].sum()
    return (problem.dividends + problem.rates.sell_factor * liquidated) / wealth


def residual(problem: RebalanceProblem, scale, ratios=None, dividend=None):
    """
    Self-financing residual of the normalised trade equation for a candidate scale: purchases with costs
    minus sales net of costs minus available cash, all relative to V(t-). Nondecreasing in the scale.
    """
    ratios = weight_ratios(problem) if ratios is None else ratios
    dividend = normalized_dividend(problem) if dividend is None else dividend
    targets = problem.targets
    buys = np.maximum(scale - ratios, 0.0) @ targets
    sells = np.maximum(ratios - scale, 0.0) @ targets
    return problem.rates.buy_factor * buys - problem.rates.sell_factor * sells - dividend


def _sorted_gaps(ratios, targets, rates):
    """
    Breakpoint gaps D-hat_k for the ratios sorted ascending, computed from cumulative sums. Tied ratios
    share the cumulative sums of the end of their tie group so their gaps are identical.
    """
    order = np.argsort(ratios, kind='stable')
    cs = ratios[order]
    ws = targets[order]
    tie_end = np.searchsorted(cs, cs, side='right') - 1
    w_le = np.cumsum(ws)[tie_end]
    p_le = np.cumsum(cs * ws)[tie_end]
    w_total = ws.sum()
    p_total = (cs * ws).sum()
    below = cs * w_le - p_le
    above = (p_total - p_le) - cs * (w_total - w_le)
    gaps = rates.buy_factor * below - rates.sell_factor * above
    return order, cs, gaps


def _aggregates(problem, ratios, pivot_ratio):
    """Pi^b, Pi^s, Pi-bar^b and Pi-bar^s for the given pivot ratio."""
    rates = problem.rates
    below = ratios <= pivot_ratio
    above = ~below
    targets = problem.targets
    buy_weight = rates.buy_factor * targets[below].sum()
    sell_weight = rates.sell_factor * targets[above].sum()
    buy_value = rates.buy_factor * (ratios[below] @ targets[below])
    sell_value = rates.sell_factor * problem.weights_prev[above].sum()
    return buy_weight, sell_weight, buy_value, sell_value


def breakpoint_gaps(problem: RebalanceProblem) -> SolverBreakpointState:
    """
    Compute the weight ratios, the normalised dividend and the breakpoint gaps, and select the pivot: the
    stock with the largest gap not exceeding the normalised dividend, smallest index first on ties.
    """
    ratios = weight_ratios(problem)
    dividend = normalized_dividend(problem)
    order, _, sorted_gaps = _sorted_gaps(ratios, problem.targets, problem.rates)
    gaps = np.empty_like(sorted_gaps)
    gaps[order] = sorted_gaps

    eligible = gaps <= dividend
    if eligible.any():
        best = gaps[eligible].max()
        pivot = int(np.flatnonzero(eligible & (gaps == best))[0])
    else:
        # rounding only; the smallest gap is nonpositive in exact arithmetic
        pivot = int(np.argmin(gaps))

    return SolverBreakpointState(
        ratios, dividend, gaps, pivot, *_aggregates(problem, ratios, ratios[pivot])
    )


def solve_scale_analytic(problem: RebalanceProblem) -> float:
    """
    Closed-form scale factor. The ratios are ranked, the pivot search starts at the largest ratio not
    above one (the frictionless answer) and walks down or up the ranking, since gaps have the same
    ranking as ratios.

    :param problem: rebalance problem
    :return: scale c > 0
    """
    ratios = weight_ratios(problem)
    dividend = normalized_dividend(problem)
    order, cs, gaps = _sorted_gaps(ratios, problem.targets, problem.rates)

    k = max(int(np.searchsorted(cs, 1.0, side='right')) - 1, 0)
    if gaps[k] > dividend:
        while k > 0 and gaps[k] > dividend:
            k -= 1
    else:
        while k + 1 < cs.size and gaps[k + 1] <= dividend:
            k += 1

    buy_weight, sell_weight, buy_value, sell_value = _aggregates(problem, ratios, cs[k])
    return (buy_value + sell_value + dividend) / (buy_weight + sell_weight)


def solve_scale_numeric(problem: RebalanceProblem, tolerance=BISECTION_TOLERANCE) -> float:
    """
    Scale factor by bisection on the sign of the residual. The lower end of the bracket is the smallest
    ratio, the upper end starts at ``max(1, max ratio)`` and doubles until the residual is nonnegative.

    :param problem: rebalance problem
    :param tolerance: relative bracket width at which the search stops
    :return: scale c > 0
    """
    ratios = weight_ratios(problem)
    dividend = normalized_dividend(problem)

    def f(x):
        return residual(problem, x, ratios, dividend)

    lower = float(ratios.min())
    upper = max(1.0, float(ratios.max()))
    doublings = 0
    while f(upper) < 0:
        if doublings == MAX_DOUBLINGS:
            raise SolverError(f'no sign change of the residual below {upper!r}')
        lower = upper
        upper *= 2.0
        doublings += 1

    while upper - lower > tolerance * max(1.0, upper):
        middle = 0.5 * (lower + upper)
        if middle <= lower or middle >= upper:
            break
        if f(middle) < 0:
            lower = middle
        else:
            upper = middle
    return 0.5 * (lower + upper)


def rebalance(problem: RebalanceProblem) -> RebalanceOutcome:
    """
    Trade to the target weights while remaining self-financing.

    :param problem: rebalance problem
    :return: RebalanceOutcome
    """
    scale = solve_scale_analytic(problem)
    holdings = scale * problem.wealth_prev * problem.targets
    change = holdings - problem.holdings_prev
    bought = float(change[change > 0].sum())
    sold = float(-change[change < 0].sum())
    costs = problem.rates.tc_buy * bought + problem.rates.tc_sell * sold
    return RebalanceOutcome(holdings, scale, costs, float(holdings.sum()), bought, sold)


def self_financing_residual(problem: RebalanceProblem, outcome: RebalanceOutcome) -> float:
    """Purchases with costs minus sales net of costs minus dividends, in currency."""
    rates = problem.rates
    return rates.buy_factor * outcome.bought - rates.sell_factor * outcome.sold - problem.dividends
