"""Long-only minimum-variance weights, drift-aware rebalancing backtests, and risk metrics.

The optimizer is an active-set method on the simplex: solve the
equality-constrained problem on the current support, drop negative
weights, and re-admit excluded assets whose marginal risk undercuts the
active level, until the KKT conditions hold. Exact for the small
universes used here, with a projected-gradient fallback against cycling.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .data_ingest import ReturnPanel
from .errors import ConfigError, DataError, InsufficientDataError, NumericalError
from .rolling_stats import CovMatrix

__all__ = [
    "WeightVector",
    "BacktestLedger",
    "REBALANCE_STEPS",
    "solve_gmv",
    "run_backtest",
    "equal_weight_ledger",
    "annualized_variance",
    "turnover",
    "variance_f_test",
    "ledger_to_csv",
]

DAYS_PER_YEAR = 252
REBALANCE_STEPS = {"daily": 1, "weekly": 5, "monthly": 21}
_KKT_TOL = 1e-8


@dataclass(frozen=True)
class WeightVector:
    """Simplex portfolio weights as of a date; ``degenerate`` marks an
    all-zero covariance input resolved to uniform weights."""

    asof: dt.date
    weights: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        w = self.weights
        if w.ndim != 1:
            raise ValueError("weights must be a vector")
        if np.any(w < -1e-12):
            raise ValueError("weights must be non-negative")
        if abs(float(w.sum()) - 1.0) > 1e-10:
            raise ValueError("weights must sum to one")


@dataclass(frozen=True)
class BacktestLedger:
    """Dated rebalance targets, drifted pre-rebalance weights, and realized returns."""

    strategy_id: str
    frequency: str
    return_dates: tuple[dt.date, ...]
    returns: np.ndarray  # (P,) realized portfolio returns
    rebalance_dates: tuple[dt.date, ...]
    target_weights: np.ndarray  # (R, N) weights set at each rebalance
    drifted_weights: np.ndarray  # (R, N) pre-rebalance weights w_{t+}
    turnovers: np.ndarray  # (R,) 1-norm |target - drifted| per rebalance

    def __post_init__(self):
        if self.returns.shape != (len(self.return_dates),):
            raise ValueError("returns must align with return dates")
        r = len(self.rebalance_dates)
        if self.target_weights.shape[0] != r or self.drifted_weights.shape[0] != r:
            raise ValueError("weight stacks must align with rebalance dates")
        if self.turnovers.shape != (r,):
            raise ValueError("turnovers must align with rebalance dates")


def _solve_on_support(cov: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Equality-constrained minimum variance on the given support, ridge-backed."""
    sub = cov[np.ix_(support, support)]
    n = sub.shape[0]
    ridge = 1e-10 * max(np.trace(sub) / n, np.finfo(float).tiny)
    ones = np.ones(n)
    try:
        x = np.linalg.solve(sub + ridge * np.eye(n), ones)
    except np.linalg.LinAlgError:
        x = np.linalg.solve(sub + 1e-8 * np.trace(sub) / n * np.eye(n) + 1e-18 * np.eye(n), ones)
    total = float(x.sum())
    if total == 0.0 or not np.all(np.isfinite(x)):
        raise NumericalError("singular system in minimum-variance solve")
    return x / total


def _projected_gradient(cov: np.ndarray, w0: np.ndarray, iters: int = 20000) -> np.ndarray:
    """Fallback solver: projected gradient with diminishing steps on the simplex."""
    w = w0.copy()
    scale = max(float(np.abs(cov).max()), np.finfo(float).tiny)
    for k in range(1, iters + 1):
        g = 2.0 * cov @ w
        w = _project_simplex(w - g / (scale * (k + 10.0)))
    return w


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, len(v) + 1)
    idx = np.nonzero(u - css / ks > 0)[0][-1]
    tau = css[idx] / (idx + 1.0)
    return np.maximum(v - tau, 0.0)


def solve_gmv(cov: CovMatrix) -> WeightVector:
    """Global minimum-variance weights under full investment and no short sales.

    KKT check on exit: active assets share a common marginal risk (within
    1e-8 of its scale) and every excluded asset's marginal risk is at least
    that level minus tolerance.
    """
    values = cov.values
    if not np.all(np.isfinite(values)):
        raise NumericalError("covariance contains non-finite entries")
    n = cov.n
    sym = 0.5 * (values + values.T)
    if np.allclose(sym, 0.0):
        return WeightVector(asof=cov.asof, weights=np.full(n, 1.0 / n), degenerate=True)

    support = np.arange(n)
    w = None
    for _ in range(2 * n + 10):
        x = _solve_on_support(sym, support)
        if np.all(x >= -1e-14):
            w = np.zeros(n)
            w[support] = np.maximum(x, 0.0)
            w /= w.sum()
            marginal = sym @ w
            active_level = float(marginal[support] @ (w[support] / w[support].sum()))
            scale = max(float(np.abs(marginal).max()), np.finfo(float).tiny)
            violators = [
                i for i in range(n)
                if i not in set(support) and marginal[i] < active_level - _KKT_TOL * scale
            ]
            if not violators:
                break
            support = np.sort(np.append(support, violators))
        else:
            support = support[x >= -1e-14]
            if support.size == 0:
                support = np.array([int(np.argmin(np.diag(sym)))])
        w = None
    if w is None:
        w = _projected_gradient(sym, np.full(n, 1.0 / n))
        w /= w.sum()
    return WeightVector(asof=cov.asof, weights=w)


def _drift(weights: np.ndarray, asset_returns: np.ndarray) -> np.ndarray:
    """Weights after one day of buy-and-hold drift."""
    grown = weights * (1.0 + asset_returns)
    total = float(grown.sum())
    if total <= 0.0:
        raise NumericalError("portfolio value collapsed to zero during drift")
    return grown / total


def _run_ledger(
    strategy_id: str,
    frequency: str,
    panel: ReturnPanel,
    dates: list[dt.date],
    target_for,
) -> BacktestLedger:
    """Shared engine: rebalance to ``target_for(date)`` on grid dates, drift in between.

    The portfolio holds uniform weights before the first rebalance. The
    return for each day after a rebalance date uses the weights set on it.
    """
    if len(dates) < 2:
        raise InsufficientDataError("backtest needs at least 2 forecast dates")
    step = REBALANCE_STEPS.get(frequency)
    if step is None:
        raise ConfigError(f"unknown rebalance frequency {frequency!r}; use {sorted(REBALANCE_STEPS)}")
    n = panel.n_assets
    first = panel.index_of(dates[0])
    last = panel.index_of(dates[-1])
    date_set = set(dates)

    rebalance_dates: list[dt.date] = []
    targets: list[np.ndarray] = []
    drifted: list[np.ndarray] = []
    turnovers: list[float] = []
    ret_dates: list[dt.date] = []
    rets: list[float] = []

    holdings = np.full(n, 1.0 / n)
    next_rebalance = first
    for idx in range(first, last + 1):
        day = panel.dates[idx]
        if idx == next_rebalance:
            if day not in date_set:
                raise DataError(f"no forecast available for rebalance date {day.isoformat()}")
            target = target_for(day)
            rebalance_dates.append(day)
            drifted.append(holdings.copy())
            targets.append(target.copy())
            turnovers.append(float(np.abs(target - holdings).sum()))
            holdings = target.copy()
            next_rebalance = idx + step
        if idx + 1 < panel.n_days:
            day_returns = panel.returns[idx + 1]
            rets.append(float(holdings @ day_returns))
            ret_dates.append(panel.dates[idx + 1])
            holdings = _drift(holdings, day_returns)

    return BacktestLedger(
        strategy_id=strategy_id,
        frequency=frequency,
        return_dates=tuple(ret_dates),
        returns=np.array(rets),
        rebalance_dates=tuple(rebalance_dates),
        target_weights=np.stack(targets),
        drifted_weights=np.stack(drifted),
        turnovers=np.array(turnovers),
    )


def run_backtest(forecasts, panel: ReturnPanel, frequency: str = "daily") -> BacktestLedger:
    """Backtest one model's forecasts: minimum-variance weights at each grid date.

    ``forecasts`` needs ``model_id``, ``dates``, and ``forecasts`` stacks
    (a ForecastRun). Forecast coverage must include every rebalance date on
    the chosen grid (every 1st/5th/21st trading day from the first date).
    """
    lookup = {d: k for k, d in enumerate(forecasts.dates)}

    def target_for(day: dt.date) -> np.ndarray:
        k = lookup[day]
        cov = CovMatrix(values=forecasts.forecasts[k], asof=day, window=(day, day))
        return solve_gmv(cov).weights

    return _run_ledger(forecasts.model_id, frequency, panel, sorted(lookup), target_for)


def equal_weight_ledger(
    panel: ReturnPanel, frequency: str = "daily", dates: list[dt.date] | None = None
) -> BacktestLedger:
    """1/N benchmark: re-target uniform weights on the rebalance grid, drift in between."""
    if dates is None:
        dates = list(panel.dates)
    n = panel.n_assets
    uniform = np.full(n, 1.0 / n)
    return _run_ledger("equal_weight", frequency, panel, sorted(dates), lambda day: uniform.copy())


def annualized_variance(ledger: BacktestLedger) -> float:
    """Variance of the daily ledger returns (1/P normalization) times 252."""
    if ledger.returns.size < 2:
        raise InsufficientDataError("need at least 2 returns for a variance")
    return float(np.var(ledger.returns)) * DAYS_PER_YEAR


def turnover(ledger: BacktestLedger) -> float:
    """Mean 1-norm weight change over rebalance events, excluding the initial allocation."""
    if ledger.turnovers.size <= 1:
        return 0.0
    return float(ledger.turnovers[1:].mean())


def variance_f_test(ledger_a: BacktestLedger, ledger_b: BacktestLedger) -> tuple[float, float]:
    """One-sided F-test of variance equality; small p supports var_a < var_b.

    Returns (statistic, p_value) with the statistic s2_a / s2_b on
    (n_a - 1, n_b - 1) degrees of freedom.
    """
    a, b = ledger_a.returns, ledger_b.returns
    if a.size < 30 or b.size < 30:
        raise InsufficientDataError("variance test needs at least 30 returns per ledger")
    s2a = float(np.var(a, ddof=1))
    s2b = float(np.var(b, ddof=1))
    if s2b == 0.0:
        raise NumericalError("zero variance in the denominator ledger")
    stat = s2a / s2b
    p = float(sps.f.cdf(stat, a.size - 1, b.size - 1))
    return stat, p


def ledger_to_csv(ledger: BacktestLedger, path, provenance: dict | None = None) -> None:
    """Daily return rows plus turnover on rebalance dates (empty otherwise)."""
    prov = provenance or {}
    by_date = dict(zip(ledger.rebalance_dates, ledger.turnovers))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# strategy={ledger.strategy_id} freq={ledger.frequency}")
        for key in sorted(prov):
            fh.write(f" {key}={prov[key]}")
        fh.write("\n")
        fh.write("date,strategy,ret,turnover\n")
        for day, ret in zip(ledger.return_dates, ledger.returns):
            to = by_date.get(day, "")
            to_txt = repr(float(to)) if to != "" else ""
            fh.write(f"{day.isoformat()},{ledger.strategy_id},{ret!r},{to_txt}\n")
