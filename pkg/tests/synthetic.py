"""Synthetic data generators shared by the test suite."""

from __future__ import annotations

import datetime as dt

import numpy as np

from covcast.data_ingest import ReturnPanel


def business_days(start: dt.date, count: int) -> tuple[dt.date, ...]:
    """Consecutive weekdays starting at (or after) ``start``."""
    days = []
    day = start
    while len(days) < count:
        if day.weekday() < 5:
            days.append(day)
        day += dt.timedelta(days=1)
    return tuple(days)


def panel_from_returns(returns: np.ndarray, start=dt.date(2020, 1, 1), mode="raw") -> ReturnPanel:
    t, n = returns.shape
    return ReturnPanel(
        dates=business_days(start, t),
        tickers=tuple(f"A{i}" for i in range(n)),
        returns=np.asarray(returns, dtype=np.float64),
        mode=mode,
    )


def gaussian_panel(n_days: int, n_assets: int, seed: int = 0, scale: float = 0.01) -> ReturnPanel:
    rng = np.random.default_rng(seed)
    return panel_from_returns(scale * rng.standard_normal((n_days, n_assets)))


def random_covariance(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random PSD matrix with eigenvalues spread over roughly [0.3, 2] * scale."""
    a = rng.standard_normal((n, n))
    q, _ = np.linalg.qr(a)
    lam = rng.uniform(0.3, 2.0, size=n) * scale
    return (q * lam) @ q.T


def correlated_covariance(vols: np.ndarray, corr: np.ndarray) -> np.ndarray:
    return corr * np.outer(vols, vols)


def low_noise_innovations(n_days: int, n_assets: int, rng, jitter: float = 0.05) -> np.ndarray:
    """Unit-second-moment innovations with tiny sampling noise.

    Scaled columns of random orthogonal matrices are cycled so that every
    consecutive block of ``n_assets`` draws has an exactly identity second
    moment; small Gaussian jitter keeps the data generic.
    """
    blocks = []
    while sum(b.shape[0] for b in blocks) < n_days:
        q, _ = np.linalg.qr(rng.standard_normal((n_assets, n_assets)))
        u = np.sqrt(n_assets) * q[:, rng.permutation(n_assets)].T  # rows have unit second moment
        blocks.append(u)
    z = np.vstack(blocks)[:n_days]
    if jitter > 0.0:
        z = z + jitter * rng.standard_normal(z.shape)
    return z


def regime_switching_panel(
    n_days: int = 600,
    n_assets: int = 4,
    switch_points: tuple[int, ...] = (250, 460),
    seed: int = 0,
    jitter: float = 0.05,
) -> ReturnPanel:
    """Returns whose true covariance jumps between two regimes at fixed dates."""
    rng = np.random.default_rng(seed)
    vols_a = np.array([0.010, 0.012, 0.009, 0.011])[:n_assets]
    vols_b = 2.5 * vols_a
    corr_a = np.full((n_assets, n_assets), 0.25)
    np.fill_diagonal(corr_a, 1.0)
    corr_b = np.full((n_assets, n_assets), 0.65)
    np.fill_diagonal(corr_b, 1.0)
    cov_a = correlated_covariance(vols_a, corr_a)
    cov_b = correlated_covariance(vols_b, corr_b)
    chol_a = np.linalg.cholesky(cov_a)
    chol_b = np.linalg.cholesky(cov_b)

    z = low_noise_innovations(n_days, n_assets, rng, jitter=jitter)
    returns = np.empty((n_days, n_assets))
    regime_b = False
    bounds = sorted(switch_points)
    for t in range(n_days):
        if bounds and t >= bounds[0]:
            regime_b = not regime_b
            bounds.pop(0)
        chol = chol_b if regime_b else chol_a
        returns[t] = chol @ z[t]
    return panel_from_returns(returns)


def persistent_panel(
    n_days: int = 700,
    n_assets: int = 4,
    seed: int = 0,
    jitter: float = 0.2,
) -> ReturnPanel:
    """Returns from a slowly drifting covariance path (persistent, non-stationary).

    Volatilities swing by a factor of a few over cycles much longer than
    typical forecast windows, so trailing estimators track well while
    full-history averages lag badly.
    """
    rng = np.random.default_rng(seed)
    base = np.array([0.010, 0.013, 0.008, 0.011, 0.009, 0.012])[:n_assets]
    phases = rng.uniform(0.0, 2 * np.pi, size=n_assets)
    t_grid = np.arange(n_days)
    z = low_noise_innovations(n_days, n_assets, rng, jitter=jitter)
    returns = np.empty((n_days, n_assets))
    for t in t_grid:
        vols = base * (1.0 + 0.75 * np.sin(2 * np.pi * t / 500.0 + phases))
        rho = 0.35 + 0.30 * np.sin(2 * np.pi * t / 650.0)
        corr = np.full((n_assets, n_assets), rho)
        np.fill_diagonal(corr, 1.0)
        cov = correlated_covariance(vols, corr)
        returns[t] = np.linalg.cholesky(cov) @ z[t]
    return panel_from_returns(returns)


def simulate_garch11(
    n_days: int, omega: float, alpha: float, beta: float, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """GARCH(1,1) residual path and its true conditional variances."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n_days)
    h = np.empty(n_days)
    e = np.empty(n_days)
    h[0] = omega / (1.0 - alpha - beta)
    e[0] = np.sqrt(h[0]) * z[0]
    for t in range(1, n_days):
        h[t] = omega + alpha * e[t - 1] ** 2 + beta * h[t - 1]
        e[t] = np.sqrt(h[t]) * z[t]
    return e, h


def constant_correlation_z(n_days: int, corr: np.ndarray, seed: int = 0) -> np.ndarray:
    """Standardized residuals with a fixed cross-correlation."""
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(corr)
    return rng.standard_normal((n_days, corr.shape[0])) @ chol.T


def write_price_csv(path, dates, tickers, prices, header=("date", "ticker", "adj_close")) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for k, day in enumerate(dates):
            for j, ticker in enumerate(tickers):
                fh.write(f"{day.isoformat()},{ticker},{prices[k][j]}\n")


def prices_from_returns(returns: np.ndarray, start_price: float = 100.0) -> np.ndarray:
    """Price paths whose simple returns reproduce ``returns``."""
    growth = np.cumprod(1.0 + returns, axis=0)
    return np.vstack([np.full(returns.shape[1], start_price), start_price * growth])
