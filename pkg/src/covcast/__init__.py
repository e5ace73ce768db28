"""Covariance forecasting models, loss evaluation, and minimum-variance backtests."""

from .data_ingest import (
    PricePanel,
    RegimeCalendar,
    ReturnPanel,
    default_regimes,
    load_prices,
    load_riskfree,
    to_returns,
)
from .rolling_stats import (
    CovMatrix,
    CovSequence,
    Scaler,
    apply_scaler,
    build_sequences,
    fit_scaler,
    full_sample_cov,
    invert_scaler,
    realized_cov,
    realized_cov_series,
    rolling_moments,
)
from .runs import ForecastRun, load_run, save_run
from .protocol import CLASSICAL_MODEL_IDS, MODEL_IDS, ModelSettings, forecast_series

__version__ = "0.1.0"

__all__ = [
    "PricePanel",
    "ReturnPanel",
    "RegimeCalendar",
    "load_prices",
    "load_riskfree",
    "to_returns",
    "default_regimes",
    "CovMatrix",
    "CovSequence",
    "Scaler",
    "rolling_moments",
    "realized_cov",
    "realized_cov_series",
    "full_sample_cov",
    "fit_scaler",
    "apply_scaler",
    "invert_scaler",
    "build_sequences",
    "ForecastRun",
    "save_run",
    "load_run",
    "MODEL_IDS",
    "CLASSICAL_MODEL_IDS",
    "ModelSettings",
    "forecast_series",
    "__version__",
]
