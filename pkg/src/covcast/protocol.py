"""Rolling forecast protocol: run any registered model over a set of test dates.

Classical and GARCH forecasters are pure per-date functions of history, so
the protocol simply loops. The neural model needs a training phase on the
period up to ``train_end`` followed by the online-update walk; both are
handled here so the CLI can treat every model id uniformly.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from . import cab as cab_mod
from . import estimators_classical as cls_mod
from . import estimators_garch as garch_mod
from .data_ingest import ReturnPanel
from .errors import ConfigError, InsufficientDataError
from .rolling_stats import realized_cov_series
from .runs import ForecastRun

__all__ = ["MODEL_IDS", "CLASSICAL_MODEL_IDS", "ModelSettings", "forecast_series", "train_cab"]

CLASSICAL_MODEL_IDS = (
    "na",
    "na_full",
    "ewma",
    "pca",
    "rmt",
    "lw",
    "lw_full",
    "ccc",
    "dcc",
    "dcc_nl",
)
MODEL_IDS = CLASSICAL_MODEL_IDS + ("cab",)


@dataclass(frozen=True)
class ModelSettings:
    """Per-family knobs shared across forecast dates."""

    ewma_eta: float = cls_mod.DEFAULT_EWMA_ETA
    pca_variance_fraction: float = cls_mod.DEFAULT_PCA_VARIANCE_FRACTION
    garch_min_obs: int = garch_mod.DEFAULT_MIN_OBS
    cab: cab_mod.CabConfig = field(default_factory=cab_mod.CabConfig)
    update: cab_mod.OnlineUpdatePolicy = field(default_factory=cab_mod.OnlineUpdatePolicy)
    val_fraction: float = 0.2


def _classical_forecast(model_id: str, panel, asof, horizon, settings: ModelSettings):
    if model_id == "na":
        return cls_mod.forecast_na(panel, asof, horizon)
    if model_id == "na_full":
        return cls_mod.forecast_na_full(panel, asof, horizon)
    if model_id == "ewma":
        return cls_mod.forecast_ewma(panel, asof, horizon, cls_mod.EwmaConfig(settings.ewma_eta))
    if model_id == "pca":
        return cls_mod.forecast_pca(
            panel, asof, horizon, cls_mod.PcaConfig(settings.pca_variance_fraction)
        )
    if model_id == "rmt":
        return cls_mod.forecast_rmt(panel, asof, horizon)
    if model_id == "lw":
        return cls_mod.forecast_lw(panel, asof, horizon)
    if model_id == "lw_full":
        return cls_mod.forecast_lw_full(panel, asof, horizon)
    if model_id == "ccc":
        return garch_mod.forecast_ccc(panel, asof, horizon, min_obs=settings.garch_min_obs)
    if model_id == "dcc":
        return garch_mod.forecast_dcc(panel, asof, horizon, min_obs=settings.garch_min_obs)
    if model_id == "dcc_nl":
        return garch_mod.forecast_dcc_nl(panel, asof, horizon, min_obs=settings.garch_min_obs)
    raise ConfigError(f"unknown model id {model_id!r}")


def train_cab(
    panel: ReturnPanel,
    horizon: int,
    train_end: dt.date,
    settings: ModelSettings,
) -> tuple[cab_mod.CabModel, list[dict]]:
    """Fit the scaler and network on the training period; returns (model, loss curve)."""
    cfg = settings.cab
    scaler, seqs, targets = cab_mod.training_sequences(panel, horizon, cfg.lookback, train_end)
    model = cab_mod.build_cab_model(panel.n_assets, scaler, cfg)
    curve = cab_mod.train(model, seqs, targets, val_fraction=settings.val_fraction)
    return model, curve


def forecast_series(
    panel: ReturnPanel,
    model_id: str,
    test_dates: list[dt.date],
    horizon: int,
    settings: ModelSettings | None = None,
    train_end: dt.date | None = None,
) -> ForecastRun:
    """Dated forecasts paired with realized targets for one model.

    Every forecast uses panel data up to its own date only. For the neural
    model ``train_end`` fixes the training period (it must precede the test
    dates); classical models ignore it.
    """
    settings = settings or ModelSettings()
    if model_id not in MODEL_IDS:
        raise ConfigError(f"unknown model id {model_id!r}; registered: {MODEL_IDS}")
    test_dates = sorted(test_dates)
    if not test_dates:
        raise InsufficientDataError("no test dates supplied")

    if model_id == "cab":
        if train_end is None:
            raise ConfigError("the neural model needs train_end")
        if train_end >= test_dates[0]:
            raise ConfigError("train_end must precede the first test date")
        model, _ = train_cab(panel, horizon, train_end, settings)
        return cab_mod.rolling_forecast(model, panel, test_dates, horizon, settings.update)

    covs = realized_cov_series(panel, horizon)
    cov_index = {c.asof: k for k, c in enumerate(covs)}
    n = panel.n_assets
    nan_matrix = np.full((n, n), np.nan)
    forecasts, targets = [], []
    for day in test_dates:
        fc = _classical_forecast(model_id, panel, day, horizon, settings)
        forecasts.append(fc.values)
        k = cov_index.get(day)
        has_target = k is not None and k + horizon < len(covs)
        targets.append(covs[k + horizon].values if has_target else nan_matrix)
    return ForecastRun(
        model_id=model_id,
        horizon=horizon,
        tickers=panel.tickers,
        dates=tuple(test_dates),
        forecasts=np.stack(forecasts),
        targets=np.stack(targets),
    )
