"""
Market data: daily total market capitalizations and total returns of a stock universe.

Total returns are split into a dividend rate, paid out as cash, and a realised rate, which grows the
invested amount. Between two trading days holdings accrue with the realised rates while dividends are
collected as cash that earns nothing until the next trade.

CSV schema (UTF-8, one row per stock and day, sorted by date then stock)::

    date,stock_id,market_cap,total_return,delisted
    2001-01-02,AAA,1250000000.0,0.0012,0
    2001-01-03,AAA,,-0.35,1

``market_cap`` is empty on the delisting day, on which the delisting return is still given. From CRSP,
``market_cap`` is ``abs(PRC) * SHROUT``, ``total_return`` is ``RET`` (``DLRET`` on the delisting day) and
the share code filter is expected to have been applied already.
"""

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import log

logger = log.get_module_logger(__name__)

MARKET_COLUMNS = ['date', 'stock_id', 'market_cap', 'total_return', 'delisted']
RISK_FREE_COLUMNS = ['date', 'annual_yield']
DATE_FORMAT = '%Y-%m-%d'
FLOAT_FORMAT = '%.17g'
NO_DELISTING = -1


class DataError(ValueError):
    """Invalid market data."""


@dataclass(frozen=True)
class MarketDataset:
    """
    Immutable daily market data.

    :param dates: strictly increasing trading dates (pandas.DatetimeIndex)
    :param stocks: sorted unique stock identifiers
    :param caps: (days, stocks) total market capitalizations, NaN where the stock is not listed
    :param returns: (days, stocks) total returns, NaN where the stock does not exist
    :param delisting: per stock index of the delisting day, -1 if the stock never delists
    """

    dates: pd.DatetimeIndex
    stocks: Tuple[str, ...]
    caps: np.ndarray
    returns: np.ndarray
    delisting: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'dates', pd.DatetimeIndex(self.dates))
        object.__setattr__(self, 'stocks', tuple(str(s) for s in self.stocks))
        object.__setattr__(self, 'caps', np.asarray(self.caps, dtype=float))
        object.__setattr__(self, 'returns', np.asarray(self.returns, dtype=float))
        object.__setattr__(self, 'delisting', np.asarray(self.delisting, dtype=int))
        for array in (self.caps, self.returns, self.delisting):
            array.flags.writeable = False
        self.validate()

    @property
    def n_days(self) -> int:
        return len(self.dates)

    @property
    def n_stocks(self) -> int:
        return len(self.stocks)

    def validate(self):
        """Check the dataset invariants, raising DataError on the first violation."""
        n_days, n_stocks = self.n_days, self.n_stocks
        if n_days < 1:
            raise DataError('dataset has no dates')
        if not self.dates.is_monotonic_increasing or not self.dates.is_unique:
            raise DataError('dates must be strictly increasing')
        if list(self.stocks) != sorted(set(self.stocks)):
            raise DataError('stock identifiers must be unique and sorted')
        if self.caps.shape != (n_days, n_stocks) or self.returns.shape != (n_days, n_stocks):
            raise DataError(f'caps and returns must have shape {(n_days, n_stocks)}')
        if self.delisting.shape != (n_stocks,):
            raise DataError(f'delisting must have shape {(n_stocks,)}')

        listed = ~np.isnan(self.caps)
        if np.any(self.caps[listed] <= 0) or not np.all(np.isfinite(self.caps[listed])):
            raise DataError('market capitalizations must be positive and finite')
        known = ~np.isnan(self.returns)
        if np.any(self.returns[known] < -1) or not np.all(np.isfinite(self.returns[known])):
            raise DataError('total returns must be finite and at least -1')

        for k, stock in enumerate(self.stocks):
            days = np.flatnonzero(listed[:, k])
            if days.size == 0:
                raise DataError(f'stock {stock} is never listed')
            first, last = days[0], days[-1]
            if last - first + 1 != days.size:
                raise DataError(f'stock {stock} has a gap in its capitalizations')
            end = self.delisting[k]
            if end == NO_DELISTING:
                if last != n_days - 1:
                    raise DataError(f'stock {stock} disappears after {self.dates[last]:%Y-%m-%d} without delisting')
                end = last
            elif end != last + 1:
                raise DataError(f'stock {stock} delisting day must follow its last listed day')
            if not np.all(known[first:end + 1, k]):
                raise DataError(f'stock {stock} has missing returns while listed')

    def caps_on(self, day: int) -> np.ndarray:
        """Capitalizations on a day, NaN for stocks not listed."""
        return self.caps[day]

    def listed_on(self, day: int) -> np.ndarray:
        """Boolean mask of stocks with a capitalization on a day."""
        return ~np.isnan(self.caps[day])

    def delisted_on(self, day: int) -> np.ndarray:
        """Boolean mask of stocks delisting on a day."""
        return self.delisting == day

    def to_frame(self) -> pd.DataFrame:
        """Long table in the CSV schema, one row per existing stock and day."""
        exists = ~np.isnan(self.returns)
        days, columns = np.nonzero(exists)
        return pd.DataFrame({
            'date': self.dates[days].strftime(DATE_FORMAT),
            'stock_id': np.asarray(self.stocks, dtype=object)[columns],
            'market_cap': self.caps[days, columns],
            'total_return': self.returns[days, columns],
            'delisted': (self.delisting[columns] == days).astype(int),
        }, columns=MARKET_COLUMNS)


@dataclass(frozen=True)
class ReturnDecomposition:
    """
    Dividend and realised rates, arrays of the same shape (one stock's days or days x stocks).
    """

    dividend_rate: np.ndarray
    realised_rate: np.ndarray


@dataclass(frozen=True)
class AccrualResult:
    holdings_pre_trade: np.ndarray
    dividends_accumulated: float


def decompose_return(cap_prev: float, cap_now: Optional[float], total_return: float, delisted_today: bool):
    """
    Split one day's total return into a dividend rate and a realised rate.

    The dividend rate is whatever part of the return the capitalization change does not explain, floored
    at zero (share issuance can make the capitalization grow faster than the return). On the delisting day
    there is no capitalization and the whole return is realised.

    :param cap_prev: capitalization on the previous day, positive
    :param cap_now: capitalization today, None on the delisting day
    :param total_return: total return today
    :param delisted_today: True on the delisting day
    :return: (dividend_rate, realised_rate)
    """
    if not cap_prev > 0:
        raise DataError(f'previous capitalization must be positive, got {cap_prev!r}')
    if delisted_today:
        if cap_now is not None:
            raise DataError('a delisted stock has no capitalization on its delisting day')
        return 0.0, total_return
    if cap_now is None:
        raise DataError('capitalization is missing on a day the stock is listed')
    dividend = max(1.0 + total_return - cap_now / cap_prev, 0.0)
    return dividend, total_return - dividend


def post_delisting_zeroing(decomposition: ReturnDecomposition, delisting_day: Optional[int]) -> ReturnDecomposition:
    """
    Zero both rates strictly after the delisting day of a single stock.

    :param decomposition: one stock's rates over consecutive days
    :param delisting_day: index of the delisting day within those days, None when the stock does not delist
    :return: ReturnDecomposition
    """
    if delisting_day is None:
        return decomposition
    size = len(decomposition.dividend_rate)
    if not 0 <= delisting_day < size:
        raise DataError(f'delisting day {delisting_day} outside the range of {size} days')
    dividend = np.array(decomposition.dividend_rate, dtype=float)
    realised = np.array(decomposition.realised_rate, dtype=float)
    dividend[delisting_day + 1:] = 0.0
    realised[delisting_day + 1:] = 0.0
    return ReturnDecomposition(dividend, realised)


def decompose(dataset: MarketDataset) -> ReturnDecomposition:
    """
    Dividend and realised rates of every stock and day of a dataset.

    Rates are NaN on days a stock cannot have been held at the previous close (the first day of the data and
    the stock's first listed day, or earlier) and zero after a delisting.
    """
    caps, returns = dataset.caps, dataset.returns
    dividend = np.full(caps.shape, np.nan)
    realised = np.full(caps.shape, np.nan)

    prev, now, total = caps[:-1], caps[1:], returns[1:]
    listed = ~np.isnan(prev) & ~np.isnan(now)
    with np.errstate(invalid='ignore'):
        rate = np.maximum(1.0 + total - now / prev, 0.0)
    dividend[1:][listed] = rate[listed]
    realised[1:][listed] = total[listed] - rate[listed]

    for k in np.flatnonzero(dataset.delisting != NO_DELISTING):
        day = dataset.delisting[k]
        column = ReturnDecomposition(dividend[:, k], realised[:, k])
        if day > 0 and not np.isnan(caps[day - 1, k]):
            column.dividend_rate[day] = 0.0
            column.realised_rate[day] = returns[day, k]
        zeroed = post_delisting_zeroing(column, int(day))
        dividend[:, k] = zeroed.dividend_rate
        realised[:, k] = zeroed.realised_rate
    return ReturnDecomposition(dividend, realised)


def _window(name, rates, size):
    rates = np.asarray(rates, dtype=float)
    if rates.ndim == 1:
        rates = rates[:, None] if size == 1 else rates[None, :]
    if rates.ndim != 2 or rates.shape[0] < 1 or rates.shape[1] != size:
        raise DataError(f'{name} must cover at least one day for {size} stock(s), got shape {rates.shape}')
    if np.isnan(rates).any():
        raise DataError(f'{name} has missing values inside the accrual window')
    return rates


def accrue_between_trades(holdings: Sequence[float], realised_rates) -> np.ndarray:
    """
    Holdings just before a trade, grown by the realised rates since the last trade.

    :param holdings: currency held per stock right after the last trade
    :param realised_rates: (days, stocks) realised rates of the days since the last trade, trade day included
    :return: holdings psi(t-)
    """
    holdings = np.asarray(holdings, dtype=float)
    realised = _window('realised rates', realised_rates, holdings.size)
    return holdings * np.prod(1.0 + realised, axis=0)


def accumulate_dividends(holdings: Sequence[float], dividend_rates, realised_rates) -> float:
    """
    Dividend cash collected since the last trade. Each day's dividend is paid on the holding grown by the
    realised rates of the earlier days of the window.

    :param holdings: currency held per stock right after the last trade
    :param dividend_rates: (days, stocks) dividend rates of the window
    :param realised_rates: (days, stocks) realised rates of the window
    :return: D(t-)
    """
    holdings = np.asarray(holdings, dtype=float)
    dividend = _window('dividend rates', dividend_rates, holdings.size)
    realised = _window('realised rates', realised_rates, holdings.size)
    if dividend.shape != realised.shape:
        raise DataError(f'dividend rates {dividend.shape} and realised rates {realised.shape} differ')
    growth = np.cumprod(1.0 + realised, axis=0)
    prior = np.vstack([np.ones((1, holdings.size)), growth[:-1]])
    return float(holdings @ (dividend * prior).sum(axis=0))


def accrue(holdings: Sequence[float], dividend_rates, realised_rates) -> AccrualResult:
    """
    Holdings and dividend cash just before the next trade.

    :param holdings: currency held per stock right after the last trade
    :param dividend_rates: (days, stocks) dividend rates since the last trade
    :param realised_rates: (days, stocks) realised rates since the last trade
    :return: AccrualResult
    """
    return AccrualResult(
        accrue_between_trades(holdings, realised_rates),
        accumulate_dividends(holdings, dividend_rates, realised_rates),
    )


def _to_float(values: pd.Series) -> pd.Series:
    """Correctly rounded conversion of number strings, NaN where a string is not a number."""

    def convert(text):
        try:
            return float(text)
        except ValueError:
            return np.nan

    return values.map(convert).astype(float)


def _line_error(frame, mask, message):
    line = int(frame.index[np.flatnonzero(mask)[0]]) + 2
    raise DataError(f'line {line}: {message}')


def _read_table(path, columns):
    path = Path(path)
    if not path.is_file():
        raise DataError(f'file not found: {path}')
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.ParserError as err:
        raise DataError(f'{path}: malformed row: {err}') from err
    except (UnicodeDecodeError, pd.errors.EmptyDataError) as err:
        raise DataError(f'{path}: unreadable CSV: {err}') from err
    if list(frame.columns) != columns:
        raise DataError(f'{path}: expected header {",".join(columns)}, got {",".join(map(str, frame.columns))}')
    frame = frame.fillna('')
    return frame


def load_market_csv(path: Union[str, Path]) -> MarketDataset:
    """
    Read and validate a market CSV file.

    :param path: CSV file path
    :return: MarketDataset
    """
    frame = _read_table(path, MARKET_COLUMNS)
    if frame.empty:
        raise DataError(f'{path}: no data rows')

    for column in MARKET_COLUMNS:
        frame[column] = frame[column].str.strip()
    missing = (frame['date'] == '') | (frame['stock_id'] == '') | (frame['total_return'] == '')
    if missing.any():
        _line_error(frame, missing, 'date, stock_id and total_return are required')

    dates = pd.to_datetime(frame['date'], format=DATE_FORMAT, errors='coerce')
    if dates.isna().any():
        _line_error(frame, dates.isna(), 'date is not YYYY-MM-DD')
    if (dates.diff() < pd.Timedelta(0)).any():
        _line_error(frame, dates.diff() < pd.Timedelta(0), 'dates are not in increasing order')

    empty_cap = frame['market_cap'] == ''
    caps = _to_float(frame['market_cap'].where(~empty_cap, 'nan'))
    if (~np.isfinite(caps) & ~empty_cap).any():
        _line_error(frame, ~np.isfinite(caps) & ~empty_cap, 'market_cap is not a number')
    if (caps <= 0).any():
        _line_error(frame, caps <= 0, 'market_cap must be positive')

    returns = _to_float(frame['total_return'])
    if not np.all(np.isfinite(returns)):
        _line_error(frame, ~np.isfinite(returns), 'total_return is not a number')
    if (returns < -1).any():
        _line_error(frame, returns < -1, 'total_return below -1')

    flags = frame['delisted'].replace('', '0')
    if (~flags.isin(['0', '1'])).any():
        _line_error(frame, ~flags.isin(['0', '1']), 'delisted must be 0 or 1')
    flagged = (flags == '1').to_numpy()
    if (flagged & ~empty_cap.to_numpy()).any():
        _line_error(frame, flagged & ~empty_cap.to_numpy(), 'market_cap must be empty on the delisting day')

    duplicated = pd.DataFrame({'date': dates, 'stock_id': frame['stock_id']}).duplicated()
    if duplicated.any():
        _line_error(frame, duplicated, 'duplicate (date, stock_id) pair')

    all_dates = pd.DatetimeIndex(dates.unique())
    stocks = sorted(frame['stock_id'].unique())
    day_index = all_dates.get_indexer(dates)
    stock_index = pd.Index(stocks).get_indexer(frame['stock_id'])

    cap_table = np.full((len(all_dates), len(stocks)), np.nan)
    return_table = np.full((len(all_dates), len(stocks)), np.nan)
    cap_table[day_index, stock_index] = caps.to_numpy()
    return_table[day_index, stock_index] = returns.to_numpy()

    # a row with a return but no capitalization is a delisting, flagged or not
    delisting = np.full(len(stocks), NO_DELISTING)
    delisted_rows = np.flatnonzero(empty_cap.to_numpy())
    for row in delisted_rows:
        k = stock_index[row]
        if delisting[k] != NO_DELISTING:
            raise DataError(f'line {row + 2}: stock {stocks[k]} delisted twice')
        delisting[k] = day_index[row]

    try:
        dataset = MarketDataset(all_dates, tuple(stocks), cap_table, return_table, delisting)
    except DataError as err:
        raise DataError(f'{path}: {err}') from err
    logger.debug('Loaded %d stocks over %d days from %s', dataset.n_stocks, dataset.n_days, path)
    return dataset


def write_market_csv(dataset: MarketDataset, path: Union[str, Path]) -> Path:
    """
    Write a dataset in the CSV schema read by :func:`load_market_csv`, numbers with 17 significant digits.
    """
    path = Path(path)
    dataset.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep='', lineterminator='\n')
    return path


def load_risk_free_csv(path: Union[str, Path]) -> pd.Series:
    """
    Read a risk-free CSV file (``date,annual_yield``) into a Series of yields indexed by date.
    """
    frame = _read_table(path, RISK_FREE_COLUMNS)
    dates = pd.to_datetime(frame['date'].str.strip(), format=DATE_FORMAT, errors='coerce')
    if dates.isna().any():
        _line_error(frame, dates.isna(), 'date is not YYYY-MM-DD')
    yields = _to_float(frame['annual_yield'].str.strip())
    if not np.all(np.isfinite(yields)):
        _line_error(frame, ~np.isfinite(yields), 'annual_yield is not a number')
    series = pd.Series(yields.to_numpy(), index=pd.DatetimeIndex(dates), name='annual_yield')
    if not series.index.is_monotonic_increasing or not series.index.is_unique:
        raise DataError(f'{path}: dates must be strictly increasing')
    return series


def digest(path: Union[str, Path]) -> str:
    """SHA-256 digest of a file's bytes."""
    sha = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 16), b''):
            sha.update(block)
    return sha.hexdigest()
