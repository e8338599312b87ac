"""
Target weight generators.

All generators work on the market weights of the current constituent list and return long-only weight
vectors summing to one. Four families are supported: index tracking, equally-weighted, entropy-weighted
and diversity-weighted on smoothed market weights.
"""

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import log, models

logger = log.get_module_logger(__name__)

INPUT_TOLERANCE = 1e-9


class WeightError(ValueError):
    """Invalid weights or weight generator input."""


class NegativeWeightError(WeightError):
    """
    A generator produced a negative target weight.

    :param stock: position of the offending stock in the weight vector (or its identifier once known)
    :param value: the negative weight
    """

    def __init__(self, stock, value):
        self.stock = stock
        self.value = value
        super(NegativeWeightError, self).__init__(f'negative target weight {value!r} for stock {stock}')


class DiversityConfig(models.Model):
    """
    Diversity-weighted portfolio parameters.

    :param p: diversity degree in (0, 1)
    :param alpha: convexity weight between market weights (1) and their moving average (0)
    :param delta: moving average window, in trading observations
    """

    p = models.Float(default=0.8, min_val=0.0, max_val=1.0, min_open=True, max_open=True, desc='Diversity degree')
    alpha = models.Float(default=0.6, min_val=0.0, max_val=1.0, desc='Convexity weight')
    delta = models.Integer(default=250, min_val=1, desc='Moving average window')


@dataclass(frozen=True)
class SmoothedWeights:
    """Moving average of market weights and its blend with the current market weights."""

    moving_average: np.ndarray
    blended: np.ndarray


def check_weights(weights, name='weights') -> np.ndarray:
    """Return weights as a float vector, rejecting negative entries or a sum away from one."""
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise WeightError(f'{name} must be a non-empty vector')
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise WeightError(f'{name} must be finite and nonnegative')
    if abs(weights.sum() - 1.0) > INPUT_TOLERANCE:
        raise WeightError(f'{name} sum to {weights.sum()!r}, expected 1')
    return weights


def market_weights(caps) -> np.ndarray:
    """
    Capitalizations normalised to weights.

    :param caps: positive capitalizations of at least two stocks
    """
    caps = np.asarray(caps, dtype=float)
    if caps.ndim != 1 or caps.size < 2:
        raise WeightError('market weights need the capitalizations of at least two stocks')
    if not np.all(np.isfinite(caps)) or np.any(caps <= 0):
        raise WeightError('capitalizations must be positive and finite')
    return caps / caps.sum()


def target_index_tracking(mu) -> np.ndarray:
    """Targets equal to the market weights."""
    return np.array(check_weights(mu, 'market weights'), copy=True)


def target_equal(d: int) -> np.ndarray:
    """Equal weights over `d` stocks."""
    if d < 2:
        raise WeightError(f'equal weights need at least two stocks, got {d}')
    return np.full(d, 1.0 / d)


def target_entropy(mu) -> np.ndarray:
    """
    Entropy-weighted targets, proportional to ``mu log mu``. Stocks with zero market weight get weight
    zero; a market concentrated in one stock has no entropy and is rejected.
    """
    mu = check_weights(mu, 'market weights')
    terms = np.zeros_like(mu)
    held = mu > 0
    terms[held] = mu[held] * np.log(mu[held])
    total = terms.sum()
    if total == 0:
        raise WeightError('entropy weights are undefined for a market concentrated in one stock')
    return terms / total


def moving_average(mu_history: Sequence, delta: int) -> np.ndarray:
    """
    Average of the last `delta` weight vectors. While fewer than `delta` observations exist, the missing
    ones are taken equal to the first observation.

    :param mu_history: weight vectors in chronological order, all of the same length
    :param delta: window length in observations
    """
    if delta < 1:
        raise WeightError(f'moving average window must be at least 1, got {delta}')
    history = np.asarray(mu_history, dtype=float)
    if history.ndim != 2 or history.shape[0] == 0:
        raise WeightError('moving average needs at least one observation')
    window = history[-delta:]
    padding = delta - window.shape[0]
    return (window.sum(axis=0) + padding * history[0]) / delta


class MovingAverage(object):
    """
    Running moving average of market weights over a fixed stock universe.

    :param delta: window length in observations
    """

    def __init__(self, delta: int):
        if delta < 1:
            raise WeightError(f'moving average window must be at least 1, got {delta}')
        self.delta = delta
        self.window = deque(maxlen=delta)

    def __len__(self):
        return len(self.window)

    def push(self, mu):
        """Add an observation."""
        self.window.append(np.array(mu, dtype=float, copy=True))

    def value(self) -> np.ndarray:
        """Current moving average, equal to ``moving_average(history, delta)``."""
        return moving_average(list(self.window), self.delta)


def smoothed_weights(mu, lam, alpha: float) -> SmoothedWeights:
    """Blend market weights with their moving average: ``alpha * mu + (1 - alpha) * lam``."""
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return SmoothedWeights(lam, alpha * mu + (1.0 - alpha) * lam)


def diversity_weights(mu, mu_bar, p: float, alpha: float) -> np.ndarray:
    """
    Diversity-weighted targets generated from smoothed market weights.

    :param mu: current market weights
    :param mu_bar: smoothed market weights, positive wherever `mu` is
    :param p: diversity degree
    :param alpha: convexity weight
    """
    mu = check_weights(mu, 'market weights')
    mu_bar = np.asarray(mu_bar, dtype=float)
    if mu_bar.shape != mu.shape:
        raise WeightError(f'smoothed weights have shape {mu_bar.shape}, market weights have shape {mu.shape}')
    if alpha == 0:
        return np.array(mu, copy=True)

    held = mu > 0
    if np.any(mu_bar[held] <= 0) or not np.all(np.isfinite(mu_bar)) or np.any(mu_bar < 0):
        raise WeightError('smoothed weights must be positive wherever market weights are')
    powers = np.zeros_like(mu_bar)
    positive = mu_bar > 0
    powers[positive] = mu_bar[positive] ** p

    xi = np.zeros_like(mu)
    xi[held] = alpha * mu_bar[held] ** (p - 1.0) / powers.sum()
    targets = mu * (xi - mu @ xi + 1.0)

    negative = np.flatnonzero(targets < 0)
    if negative.size:
        raise NegativeWeightError(int(negative[0]), float(targets[negative[0]]))
    return targets


def target_diversity(mu, mu_bar, config: DiversityConfig) -> np.ndarray:
    """Diversity-weighted targets for a configuration, see :func:`diversity_weights`."""
    return diversity_weights(mu, mu_bar, config.p, config.alpha)


def measure_of_diversity(x, p: float) -> float:
    """The measure of diversity ``(sum x_i^p)^(1/p)`` of a weight vector."""
    x = check_weights(x)
    return float(np.sum(x[x > 0] ** p) ** (1.0 / p))


def _diversity_targets(mu, mu_bar, diversity, alpha):
    if diversity is None or mu_bar is None:
        raise WeightError('diversity targets need smoothed weights and a diversity configuration')
    return diversity_weights(mu, mu_bar, diversity.p, diversity.alpha if alpha is None else alpha)


# generator per portfolio family, called as generator(mu, mu_bar, diversity, alpha)
TARGETS = {
    'index_tracking': lambda mu, mu_bar, diversity, alpha: target_index_tracking(mu),
    'equal': lambda mu, mu_bar, diversity, alpha: target_equal(len(mu)),
    'entropy': lambda mu, mu_bar, diversity, alpha: target_entropy(mu),
    'diversity': _diversity_targets,
    'diversity_dynamic': _diversity_targets,
}


def generate_targets(kind: str, mu, mu_bar=None, diversity: Optional[DiversityConfig] = None, alpha=None):
    """
    Targets of a portfolio family over the current constituent list.

    :param kind: one of index_tracking, equal, entropy, diversity, diversity_dynamic
    :param mu: market weights of the constituents
    :param mu_bar: smoothed market weights, for the diversity families
    :param diversity: DiversityConfig, for the diversity families
    :param alpha: convexity weight overriding the configured one (dynamic family)
    """
    try:
        generator = TARGETS[kind]
    except KeyError:
        raise WeightError(f'unknown portfolio kind {kind!r}')
    return generator(mu, mu_bar, diversity, alpha)
