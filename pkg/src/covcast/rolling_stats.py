"""Rolling moments, realized covariance targets, standardization, and model input sequences.

The realized covariance over a trailing window of F observations uses the
F-1 denominator throughout, so the window diagonal coincides with the
rolling variance series.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data_ingest import ReturnPanel
from .errors import ConfigError, InsufficientDataError

__all__ = [
    "RollingConfig",
    "CovMatrix",
    "RollingMoments",
    "Scaler",
    "CovSequence",
    "rolling_moments",
    "realized_cov",
    "realized_cov_series",
    "full_sample_cov",
    "fit_scaler",
    "apply_scaler",
    "invert_scaler",
    "build_sequences",
    "covs_to_csv",
]


@dataclass(frozen=True)
class RollingConfig:
    """Forecast horizon F (also the realized window) and model lookback L."""

    window: int
    lookback: int = 1

    def __post_init__(self):
        if self.window < 2:
            raise ConfigError(f"window must be >= 2, got {self.window}")
        if self.lookback < 1:
            raise ConfigError(f"lookback must be >= 1, got {self.lookback}")


@dataclass(frozen=True)
class CovMatrix:
    """A dated N x N covariance matrix with the data window it was computed from."""

    values: np.ndarray
    asof: dt.date
    window: tuple[dt.date, dt.date]

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"covariance must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("covariance contains non-finite entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def max_asymmetry(self) -> float:
        return float(np.max(np.abs(self.values - self.values.T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.values + self.values.T))[0])


@dataclass(frozen=True)
class RollingMoments:
    """Trailing F-day mean and standard deviation series, one row per window end."""

    dates: tuple[dt.date, ...]
    mean: np.ndarray  # (M, N)
    std: np.ndarray  # (M, N)

    def at(self, day: dt.date) -> tuple[np.ndarray, np.ndarray]:
        i = self.dates.index(day)
        return self.mean[i], self.std[i]


def rolling_moments(panel: ReturnPanel, window: int) -> RollingMoments:
    """Trailing mean and standard deviation over ``window`` days for every window end.

    The variance uses the window-minus-one denominator.
    """
    if window < 2:
        raise ConfigError(f"window must be >= 2, got {window}")
    if panel.n_days < window:
        raise InsufficientDataError(
            f"need {window} observations for rolling moments, have {panel.n_days}"
        )
    views = sliding_window_view(panel.returns, window, axis=0)  # (M, N, F)
    mean = views.mean(axis=2)
    std = views.std(axis=2, ddof=1)
    return RollingMoments(dates=panel.dates[window - 1 :], mean=mean, std=std)


def _window_rows(panel: ReturnPanel, window: int, asof: dt.date) -> np.ndarray:
    end = panel.index_of(asof)
    start = end - window + 1
    if start < 0:
        raise InsufficientDataError(
            f"need {window} observations ending {asof.isoformat()}, have {end + 1}"
        )
    return panel.returns[start : end + 1]


def realized_cov(panel: ReturnPanel, window: int, asof: dt.date) -> CovMatrix:
    """Realized covariance of the ``window`` returns ending at ``asof``."""
    if window < 2:
        raise ConfigError(f"window must be >= 2, got {window}")
    rows = _window_rows(panel, window, asof)
    centered = rows - rows.mean(axis=0)
    values = centered.T @ centered / (window - 1)
    values = 0.5 * (values + values.T)
    end = panel.index_of(asof)
    return CovMatrix(values=values, asof=asof, window=(panel.dates[end - window + 1], asof))


def realized_cov_series(panel: ReturnPanel, window: int) -> list[CovMatrix]:
    """Realized covariance for every window end in the panel, oldest first.

    Each entry depends only on its own trailing window, so the series is
    identical however much future data the panel happens to contain.
    """
    if panel.n_days < window:
        raise InsufficientDataError(
            f"need {window} observations for a realized covariance, have {panel.n_days}"
        )
    views = sliding_window_view(panel.returns, window, axis=0)  # (M, N, F)
    centered = views - views.mean(axis=2, keepdims=True)
    covs = np.einsum("mif,mjf->mij", centered, centered) / (window - 1)
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    out = []
    for k in range(covs.shape[0]):
        asof = panel.dates[window - 1 + k]
        out.append(
            CovMatrix(values=covs[k], asof=asof, window=(panel.dates[k], asof))
        )
    return out


def full_sample_cov(panel: ReturnPanel, upto: dt.date) -> CovMatrix:
    """Sample covariance of all panel data from the start through ``upto``."""
    end = panel.index_of(upto)
    if end + 1 < 2:
        raise InsufficientDataError("need at least 2 observations for a sample covariance")
    rows = panel.returns[: end + 1]
    centered = rows - rows.mean(axis=0)
    values = centered.T @ centered / (end + 1 - 1)
    values = 0.5 * (values + values.T)
    return CovMatrix(values=values, asof=upto, window=(panel.dates[0], upto))


@dataclass(frozen=True)
class Scaler:
    """Per-entry standardization statistics fitted on training-period matrices only."""

    means: np.ndarray  # (N, N)
    stds: np.ndarray  # (N, N), strictly positive

    def __post_init__(self):
        if self.means.shape != self.stds.shape:
            raise ValueError("scaler mean/std shapes differ")
        if np.any(self.stds <= 0.0):
            raise ValueError("scaler stds must be strictly positive")


def fit_scaler(training: list[CovMatrix] | np.ndarray) -> Scaler:
    """Fit per-entry mean/std on training matrices; zero-variance entries get std 1."""
    if isinstance(training, np.ndarray):
        stack = training
    else:
        if len(training) == 0:
            raise InsufficientDataError("scaler needs a non-empty training set")
        stack = np.stack([c.values for c in training])
    if stack.shape[0] < 2:
        raise InsufficientDataError("scaler needs at least 2 training matrices")
    means = stack.mean(axis=0)
    stds = stack.std(axis=0)
    stds = np.where(stds > 0.0, stds, 1.0)
    return Scaler(means=means, stds=stds)


def apply_scaler(scaler: Scaler, values: np.ndarray) -> np.ndarray:
    """Standardize one matrix or a stack of matrices."""
    return (values - scaler.means) / scaler.stds


def invert_scaler(scaler: Scaler, values: np.ndarray) -> np.ndarray:
    """Undo :func:`apply_scaler`."""
    return values * scaler.stds + scaler.means


@dataclass(frozen=True)
class CovSequence:
    """Lookback-ordered stack of L+1 scaled covariance matrices ending at ``asof``.

    ``raw_last`` keeps the unscaled trailing matrix so downstream blending
    with recent history stays exact rather than round-tripping the scaler.
    """

    matrices: np.ndarray  # (L+1, N, N), scaled
    scaler: Scaler
    asof: dt.date
    raw_last: CovMatrix

    def __post_init__(self):
        if self.matrices.ndim != 3:
            raise ValueError("sequence matrices must be a 3-d stack")

    @property
    def length(self) -> int:
        return self.matrices.shape[0]


def build_sequences(covs: list[CovMatrix], lookback: int, scaler: Scaler) -> list[CovSequence]:
    """Overlapping scaled sequences of ``lookback + 1`` matrices, stride one day."""
    if lookback < 0:
        raise ConfigError(f"lookback must be >= 0, got {lookback}")
    if len(covs) < lookback + 1:
        raise InsufficientDataError(
            f"need at least {lookback + 1} matrices for sequences, have {len(covs)}"
        )
    stack = np.stack([c.values for c in covs])
    scaled = apply_scaler(scaler, stack)
    out = []
    for i in range(lookback, len(covs)):
        out.append(
            CovSequence(
                matrices=scaled[i - lookback : i + 1].copy(),
                scaler=scaler,
                asof=covs[i].asof,
                raw_last=covs[i],
            )
        )
    return out


def covs_to_csv(covs: list[CovMatrix], path) -> None:
    """Audit dump: one row per (date, i, j, value)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("date,i,j,value\n")
        for c in covs:
            n = c.n
            for i in range(n):
                for j in range(n):
                    fh.write(f"{c.asof.isoformat()},{i},{j},{c.values[i, j]!r}\n")
