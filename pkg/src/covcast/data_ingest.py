"""Price/risk-free file loading, return panels, and market-regime calendars.

Input formats
-------------
Price CSV: header ``date,ticker,adj_close`` with ISO-8601 dates, UTF-8.
Risk-free CSV: header ``date,rate_pct_annual`` where the rate is an
annualized percentage (1-month T-bill convention); it is converted to a
daily decimal rate by dividing by 100 and 252.

Missing data is handled by dropping any date that is not quoted for every
ticker (calendar intersection). Nothing is interpolated.
"""

from __future__ import annotations

import csv
import datetime as dt
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ConfigError, InsufficientDataError, ParseError

DAYS_PER_YEAR = 252

RETURN_MODES = ("raw", "excess")


@dataclass(frozen=True)
class PricePanel:
    """Aligned adjusted-close prices: one row per trading day, one column per ticker."""

    dates: tuple[dt.date, ...]
    tickers: tuple[str, ...]
    prices: np.ndarray  # (T, N)

    def __post_init__(self):
        if self.prices.shape != (len(self.dates), len(self.tickers)):
            raise ValueError("price matrix shape does not match dates/tickers")

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    @property
    def n_days(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class ReturnPanel:
    """Simple daily returns; ``mode`` records whether the risk-free rate was removed."""

    dates: tuple[dt.date, ...]
    tickers: tuple[str, ...]
    returns: np.ndarray  # (T-1, N)
    mode: str = "raw"

    def __post_init__(self):
        if self.mode not in RETURN_MODES:
            raise ConfigError(f"unknown return mode {self.mode!r}")
        if self.returns.shape != (len(self.dates), len(self.tickers)):
            raise ValueError("return matrix shape does not match dates/tickers")

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def index_of(self, day: dt.date) -> int:
        """Position of ``day`` in the panel calendar; raises if absent."""
        i = bisect_right(self.dates, day) - 1
        if i < 0 or self.dates[i] != day:
            raise AlignmentError(f"date {day.isoformat()} not in panel calendar")
        return i

    def truncate_after(self, day: dt.date) -> "ReturnPanel":
        """Panel restricted to dates <= day (used by no-lookahead checks)."""
        keep = sum(1 for d in self.dates if d <= day)
        return ReturnPanel(
            dates=self.dates[:keep],
            tickers=self.tickers,
            returns=self.returns[:keep].copy(),
            mode=self.mode,
        )


@dataclass(frozen=True)
class RegimeCalendar:
    """Labelled, non-overlapping evaluation windows plus an Overall span."""

    segments: tuple[tuple[str, dt.date, dt.date], ...]

    def __post_init__(self):
        spans = [(s, e, lbl) for lbl, s, e in self.segments if lbl != "Overall"]
        spans.sort()
        for (s1, e1, l1), (s2, e2, l2) in zip(spans, spans[1:]):
            if s2 <= e1:
                raise ConfigError(f"regime segments {l1!r} and {l2!r} overlap")
        for lbl, s, e in self.segments:
            if e < s:
                raise ConfigError(f"regime segment {lbl!r} ends before it starts")

    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _, _ in self.segments)

    def segment_of(self, day: dt.date) -> str | None:
        """First non-Overall segment containing ``day``, or None."""
        for lbl, s, e in self.segments:
            if lbl != "Overall" and s <= day <= e:
                return lbl
        return None


def default_regimes() -> RegimeCalendar:
    """The three test-window regimes (two bull phases around a bear phase) plus Overall."""
    return RegimeCalendar(
        segments=(
            ("Bull-1", dt.date(2021, 1, 1), dt.date(2022, 1, 2)),
            ("Bear", dt.date(2022, 1, 3), dt.date(2022, 6, 12)),
            ("Bull-2", dt.date(2022, 6, 13), dt.date(2023, 12, 31)),
            ("Overall", dt.date(2021, 1, 1), dt.date(2023, 12, 31)),
        )
    )


DEFAULT_PRICE_SCHEMA = {"date": "date", "ticker": "ticker", "price": "adj_close"}


def _parse_date(raw: str, row: int, path: str) -> dt.date:
    try:
        return dt.date.fromisoformat(raw.strip())
    except ValueError as exc:
        raise ParseError(f"{path}: row {row}: bad date {raw!r}: {exc}") from None


def load_prices(path, schema: dict[str, str] | None = None) -> PricePanel:
    """Load a long-format price CSV and align all tickers on common trading days.

    Parameters
    ----------
    path : str or Path
        CSV file with one row per (date, ticker) observation.
    schema : dict, optional
        Maps the logical fields ``date``, ``ticker``, ``price`` to column
        names. Defaults to ``date,ticker,adj_close``.

    Returns
    -------
    PricePanel
        Dates on which every ticker is quoted; rows missing any ticker are
        dropped. Tickers are ordered alphabetically so that input row order
        is irrelevant.
    """
    schema = dict(DEFAULT_PRICE_SCHEMA, **(schema or {}))
    path = str(path)
    by_ticker: dict[str, dict[dt.date, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{path}: empty file")
        missing = [c for c in (schema["date"], schema["ticker"], schema["price"]) if c not in reader.fieldnames]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}")
        for row_no, row in enumerate(reader, start=2):  # header is row 1
            if None in row.values() or any(v is None for v in row.values()):
                raise ParseError(f"{path}: row {row_no}: wrong field count")
            day = _parse_date(row[schema["date"]], row_no, path)
            ticker = row[schema["ticker"]].strip()
            if not ticker:
                raise ParseError(f"{path}: row {row_no}: empty ticker")
            try:
                price = float(row[schema["price"]])
            except (TypeError, ValueError):
                raise ParseError(f"{path}: row {row_no}: non-numeric price {row[schema['price']]!r}") from None
            if not np.isfinite(price) or price <= 0.0:
                raise ParseError(f"{path}: row {row_no}: non-positive price {price!r}")
            series = by_ticker.setdefault(ticker, {})
            if day in series:
                raise ParseError(f"{path}: row {row_no}: duplicate quote for {ticker} on {day.isoformat()}")
            series[day] = price

    if len(by_ticker) < 2:
        raise InsufficientDataError(f"{path}: need at least 2 tickers, found {len(by_ticker)}")
    tickers = tuple(sorted(by_ticker))
    common = set.intersection(*(set(s) for s in by_ticker.values()))
    dates = tuple(sorted(common))
    if len(dates) < 2:
        raise InsufficientDataError(f"{path}: need at least 2 common trading days, found {len(dates)}")
    prices = np.array([[by_ticker[tic][d] for tic in tickers] for d in dates], dtype=np.float64)
    return PricePanel(dates=dates, tickers=tickers, prices=prices)


def load_riskfree(path) -> dict[dt.date, float]:
    """Load the risk-free CSV and return daily decimal rates keyed by date."""
    path = str(path)
    rates: dict[dt.date, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "date" not in reader.fieldnames or "rate_pct_annual" not in reader.fieldnames:
            raise ParseError(f"{path}: expected header date,rate_pct_annual")
        for row_no, row in enumerate(reader, start=2):
            day = _parse_date(row["date"], row_no, path)
            try:
                annual_pct = float(row["rate_pct_annual"])
            except (TypeError, ValueError):
                raise ParseError(f"{path}: row {row_no}: non-numeric rate {row['rate_pct_annual']!r}") from None
            rates[day] = annual_pct / 100.0 / DAYS_PER_YEAR
    if not rates:
        raise InsufficientDataError(f"{path}: no risk-free observations")
    return rates


def _riskfree_on(rates_sorted: list[tuple[dt.date, float]], day: dt.date) -> float:
    """Most recent rate at or before ``day`` (forward fill across gaps)."""
    keys = [d for d, _ in rates_sorted]
    i = bisect_right(keys, day) - 1
    if i < 0:
        raise AlignmentError(f"no risk-free rate available on or before {day.isoformat()}")
    return rates_sorted[i][1]


def to_returns(
    panel: PricePanel,
    riskfree: dict[dt.date, float] | None = None,
    mode: str = "raw",
) -> ReturnPanel:
    """Convert aligned prices to simple daily returns, optionally in excess of the risk-free rate.

    The return dated ``t`` covers the move from the previous trading day into
    ``t``: ``r[t] = p[t]/p[t-1] - 1``. In excess mode the daily risk-free
    rate for ``t`` (forward-filled) is subtracted from every asset.
    """
    if mode not in RETURN_MODES:
        raise ConfigError(f"unknown return mode {mode!r}")
    rets = panel.prices[1:] / panel.prices[:-1] - 1.0
    dates = panel.dates[1:]
    if mode == "excess":
        if not riskfree:
            raise AlignmentError("excess mode requires a risk-free series")
        rates_sorted = sorted(riskfree.items())
        rf = np.array([_riskfree_on(rates_sorted, d) for d in dates], dtype=np.float64)
        rets = rets - rf[:, None]
    return ReturnPanel(dates=dates, tickers=panel.tickers, returns=rets, mode=mode)
