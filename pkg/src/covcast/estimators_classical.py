"""Rolling-history covariance forecasters: naive, EWMA, spectral de-noising, and linear shrinkage.

Every forecaster maps (panel, asof, horizon) to a covariance forecast for
the next ``horizon`` days and looks at panel rows up to ``asof`` only.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .data_ingest import ReturnPanel
from .errors import ConfigError, InsufficientDataError, NumericalError
from .rolling_stats import CovMatrix, full_sample_cov, realized_cov

__all__ = [
    "EwmaConfig",
    "PcaConfig",
    "ShrinkageResult",
    "forecast_na",
    "forecast_na_full",
    "forecast_ewma",
    "forecast_pca",
    "forecast_rmt",
    "lw_shrink",
    "forecast_lw",
    "forecast_lw_full",
]

DEFAULT_EWMA_ETA = 0.94  # RiskMetrics-style decay
DEFAULT_PCA_VARIANCE_FRACTION = 0.95


@dataclass(frozen=True)
class EwmaConfig:
    eta: float = DEFAULT_EWMA_ETA

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")


@dataclass(frozen=True)
class PcaConfig:
    variance_fraction: float = DEFAULT_PCA_VARIANCE_FRACTION

    def __post_init__(self):
        if not 0.0 < self.variance_fraction <= 1.0:
            raise ConfigError(
                f"variance_fraction must lie in (0, 1], got {self.variance_fraction}"
            )


@dataclass(frozen=True)
class ShrinkageResult:
    """Shrinkage intensity, the scaled-identity target, and a degenerate-denominator flag."""

    rho: float
    target: CovMatrix
    degenerate: bool = False


def forecast_na(panel: ReturnPanel, asof: dt.date, horizon: int) -> CovMatrix:
    """Persistence forecast: the trailing realized covariance, unchanged."""
    return realized_cov(panel, horizon, asof)


def forecast_na_full(panel: ReturnPanel, asof: dt.date, horizon: int) -> CovMatrix:
    """Full-sample covariance of everything observed through ``asof``."""
    return full_sample_cov(panel, asof)


def forecast_ewma(
    panel: ReturnPanel, asof: dt.date, horizon: int, cfg: EwmaConfig | None = None
) -> CovMatrix:
    """Decay-weighted blend of today's residual outer product with the trailing covariance.

    With decay eta the forecast is (1 - eta) * e e' + eta * trailing, where e
    is the day's return minus the trailing window mean. Both terms are PSD,
    so any eta in [0, 1] yields a PSD forecast.
    """
    cfg = cfg or EwmaConfig()
    trailing = realized_cov(panel, horizon, asof)
    end = panel.index_of(asof)
    window = panel.returns[end - horizon + 1 : end + 1]
    resid = panel.returns[end] - window.mean(axis=0)
    values = (1.0 - cfg.eta) * np.outer(resid, resid) + cfg.eta * trailing.values
    return CovMatrix(values=0.5 * (values + values.T), asof=asof, window=trailing.window)


def forecast_pca(
    panel: ReturnPanel, asof: dt.date, horizon: int, cfg: PcaConfig | None = None
) -> CovMatrix:
    """Spectral truncation of the trailing covariance keeping the dominant eigenvalue mass.

    Eigenvalues are sorted descending and the smallest k with cumulative
    mass >= variance_fraction * trace is retained; the matrix is rebuilt
    from those k components.
    """
    cfg = cfg or PcaConfig()
    trailing = realized_cov(panel, horizon, asof)
    if not np.all(np.isfinite(trailing.values)):
        raise NumericalError("eigendecomposition on non-finite input")
    lam, vec = np.linalg.eigh(trailing.values)
    order = np.argsort(lam)[::-1]
    lam, vec = lam[order], vec[:, order]
    total = lam.sum()
    if total <= 0.0:
        k = len(lam)  # degenerate zero matrix: keep everything (a no-op)
    else:
        k = int(np.searchsorted(np.cumsum(lam) / total, cfg.variance_fraction) + 1)
        k = min(k, len(lam))
    values = (vec[:, :k] * lam[:k]) @ vec[:, :k].T
    return CovMatrix(values=0.5 * (values + values.T), asof=asof, window=trailing.window)


def forecast_rmt(panel: ReturnPanel, asof: dt.date, horizon: int) -> CovMatrix:
    """Noise-band eigenvalue clipping of the trailing covariance.

    The noise band [lam_minus, lam_plus] = (1 -/+ 1/sqrt(q))^2 with
    q = horizon / n_assets is the pure-noise eigenvalue range for the
    estimation window; eigenvalues inside the band are replaced by the band
    midpoint and the matrix is rebuilt.
    """
    trailing = realized_cov(panel, horizon, asof)
    q = horizon / panel.n_assets
    if q <= 0.0:
        raise ConfigError(f"aspect ratio must be positive, got {q}")
    lam_plus = (1.0 + 1.0 / np.sqrt(q)) ** 2
    lam_minus = (1.0 - 1.0 / np.sqrt(q)) ** 2
    lam, vec = np.linalg.eigh(trailing.values)
    inside = (lam >= lam_minus) & (lam <= lam_plus)
    lam = np.where(inside, 0.5 * (lam_plus + lam_minus), lam)
    values = (vec * lam) @ vec.T
    return CovMatrix(values=0.5 * (values + values.T), asof=asof, window=trailing.window)


def lw_shrink(sample: CovMatrix, window_rows: np.ndarray) -> tuple[CovMatrix, ShrinkageResult]:
    """Shrink a sample covariance toward the scaled identity (trace/N) * I.

    The intensity is the ratio of the summed estimation variances of the
    off-diagonal sample covariances to the summed squared deviations of
    those entries from the target, clipped to [0, 1]. The estimation
    variance of each entry is the sample variance of the per-period
    cross-products divided by the window length. A zero denominator means
    the sample already matches the target; no shrinkage is applied and the
    result is flagged.
    """
    values = sample.values
    n = sample.n
    t_obs = window_rows.shape[0]
    if window_rows.shape[1] != n:
        raise ValueError("window data does not match covariance dimension")
    if t_obs < 2:
        raise InsufficientDataError("shrinkage needs at least 2 window observations")

    target_scale = np.trace(values) / n
    target = target_scale * np.eye(n)

    centered = window_rows - window_rows.mean(axis=0)
    cross = centered[:, :, None] * centered[:, None, :]  # (T, N, N) per-period products
    var_entries = cross.var(axis=0, ddof=1) / t_obs

    off = ~np.eye(n, dtype=bool)
    numerator = float(var_entries[off].sum())
    denominator = float(((values - target)[off] ** 2).sum())

    degenerate = denominator <= 0.0
    rho = 0.0 if degenerate else float(np.clip(numerator / denominator, 0.0, 1.0))
    shrunk = rho * target + (1.0 - rho) * values
    result = ShrinkageResult(
        rho=rho,
        target=CovMatrix(values=target, asof=sample.asof, window=sample.window),
        degenerate=degenerate,
    )
    return (
        CovMatrix(values=0.5 * (shrunk + shrunk.T), asof=sample.asof, window=sample.window),
        result,
    )


def forecast_lw(panel: ReturnPanel, asof: dt.date, horizon: int) -> CovMatrix:
    """Shrink the trailing realized covariance toward the scaled identity."""
    trailing = realized_cov(panel, horizon, asof)
    end = panel.index_of(asof)
    rows = panel.returns[end - horizon + 1 : end + 1]
    shrunk, _ = lw_shrink(trailing, rows)
    return shrunk


def forecast_lw_full(panel: ReturnPanel, asof: dt.date, horizon: int) -> CovMatrix:
    """Shrink the full-sample covariance toward the scaled identity."""
    sample = full_sample_cov(panel, asof)
    end = panel.index_of(asof)
    rows = panel.returns[: end + 1]
    shrunk, _ = lw_shrink(sample, rows)
    return shrunk
