"""GARCH(1,1) volatility paths combined with constant, dynamic, and shrinkage-regularized correlations.

Residuals are the panel returns minus their trailing window mean. Each
asset gets a univariate GARCH(1,1) fitted by Gaussian quasi-maximum
likelihood on an expanding history; correlations come from the
standardized residuals. Multi-step covariance forecasts average the
per-step volatility/correlation products over the horizon.

The first forecast step uses the exact one-step recursion seeded with the
final observed residual; later steps decay geometrically toward the
long-run level. Likelihood recursions are evaluated with
``scipy.signal.lfilter`` (they are first-order linear filters), which
keeps refitting on every forecast date affordable.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import minimize
from scipy.signal import lfilter

from .data_ingest import ReturnPanel
from .errors import ConfigError, InsufficientDataError, NumericalError
from .rolling_stats import CovMatrix

__all__ = [
    "GarchParams",
    "DccParams",
    "fit_garch11",
    "garch_conditional_variances",
    "garch_variance_path",
    "forecast_ccc",
    "fit_dcc",
    "forecast_dcc",
    "forecast_dcc_nl",
    "nl_shrink_correlation",
]

GARCH_FALLBACK = (0.05, 0.90)
DCC_FALLBACK = (0.02, 0.95)
_STATIONARITY_MARGIN = 1e-6
DEFAULT_MIN_OBS = 50


@dataclass(frozen=True)
class GarchParams:
    """Fitted GARCH(1,1) parameters and the conditional variance of the final observation."""

    omega: float
    alpha: float
    beta: float
    h_last: float
    fallback: bool = False

    def __post_init__(self):
        if self.omega <= 0.0 or self.alpha < 0.0 or self.beta < 0.0:
            raise ConfigError("omega must be positive and alpha, beta non-negative")
        if self.alpha + self.beta >= 1.0:
            raise ConfigError("alpha + beta must be < 1")


@dataclass(frozen=True)
class DccParams:
    """Correlation dynamics (news/persistence), the unconditional target, and the final state."""

    alpha: float
    beta: float
    qbar: np.ndarray
    q_last: np.ndarray
    r_last: np.ndarray
    fallback: bool = False

    def __post_init__(self):
        if self.alpha < 0.0 or self.beta < 0.0 or self.alpha + self.beta >= 1.0:
            raise ConfigError("require alpha, beta >= 0 and alpha + beta < 1")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _logit(p):
    return np.log(p / (1.0 - p))


def _split_persistence(a: float, b: float) -> tuple[float, float]:
    """Map unconstrained (a, b) to (alpha, beta) with alpha+beta < 1."""
    s = (1.0 - _STATIONARITY_MARGIN) * _sigmoid(a)
    frac = _sigmoid(b)
    return s * frac, s * (1.0 - frac)


def _merge_persistence(alpha: float, beta: float) -> tuple[float, float]:
    s = (alpha + beta) / (1.0 - _STATIONARITY_MARGIN)
    return _logit(s), _logit(alpha / (alpha + beta))


def garch_conditional_variances(resid: np.ndarray, params: GarchParams) -> np.ndarray:
    """Filtered conditional variance path h_1..h_T, started at the sample variance."""
    resid = np.asarray(resid, dtype=np.float64)
    h1 = float(np.var(resid))
    x = params.omega + params.alpha * resid[:-1] ** 2
    tail, _ = lfilter([1.0], [1.0, -params.beta], x, zi=[params.beta * h1])
    return np.concatenate([[h1], tail])


def _garch_nll(resid: np.ndarray, omega: float, alpha: float, beta: float, h1: float) -> float:
    x = omega + alpha * resid[:-1] ** 2
    tail, _ = lfilter([1.0], [1.0, -beta], x, zi=[beta * h1])
    h = np.concatenate([[h1], tail])
    if np.any(h <= 0.0) or not np.all(np.isfinite(h)):
        return 1e10
    return 0.5 * float(np.sum(np.log(h) + resid**2 / h))


def fit_garch11(resid: np.ndarray, min_obs: int = DEFAULT_MIN_OBS) -> GarchParams:
    """Gaussian quasi-maximum-likelihood GARCH(1,1) fit on a residual series.

    The optimizer works on unconstrained coordinates (log level, logistic
    persistence split) so the stationarity constraint alpha + beta < 1 is
    exact. If it fails to converge the standard fallback (0.05, 0.90) is
    returned with the level matched to the sample variance, flagged.
    """
    resid = np.asarray(resid, dtype=np.float64)
    if resid.ndim != 1:
        raise ValueError("residual series must be 1-d")
    if resid.size < min_obs:
        raise InsufficientDataError(f"need {min_obs} residuals to fit, have {resid.size}")
    if not np.all(np.isfinite(resid)):
        raise NumericalError("residual series contains non-finite values")
    h1 = float(np.var(resid))
    if h1 <= 0.0:
        raise NumericalError("degenerate likelihood: residual series has zero variance")

    def nll(theta):
        omega = np.exp(theta[0])
        alpha, beta = _split_persistence(theta[1], theta[2])
        return _garch_nll(resid, omega, alpha, beta, h1)

    a0, b0 = _merge_persistence(*GARCH_FALLBACK)
    theta0 = np.array([np.log(h1 * (1.0 - sum(GARCH_FALLBACK))), a0, b0])
    res = minimize(
        nll,
        theta0,
        method="Nelder-Mead",
        options={"fatol": 1e-8, "xatol": 1e-8, "maxfev": 4000},
    )
    fallback = not (res.success and np.all(np.isfinite(res.x)))
    if fallback:
        alpha, beta = GARCH_FALLBACK
        omega = h1 * (1.0 - alpha - beta)
    else:
        omega = float(np.exp(res.x[0]))
        alpha, beta = _split_persistence(res.x[1], res.x[2])
    params = GarchParams(omega=omega, alpha=alpha, beta=beta, h_last=h1, fallback=fallback)
    h = garch_conditional_variances(resid, params)
    return replace(params, h_last=float(h[-1]))


def garch_variance_path(params: GarchParams, steps: int) -> np.ndarray:
    """Variance forecasts for steps 1..``steps``, decaying from ``h_last``.

    Step f is omega * sum_{j<f} (alpha+beta)^j + (alpha+beta)^f * h_last,
    which converges to omega / (1 - alpha - beta) as f grows.
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    s = params.alpha + params.beta
    pows = s ** np.arange(1, steps + 1, dtype=np.float64)
    if s == 0.0:
        geo = np.full(steps, params.omega)
    else:
        geo = params.omega * (1.0 - pows) / (1.0 - s)
    return geo + pows * params.h_last


def _seeded_variance_path(resid: np.ndarray, params: GarchParams, steps: int) -> np.ndarray:
    """Forecast path whose first step uses the final observed squared residual."""
    h = garch_conditional_variances(resid, params)
    h_next = params.omega + params.alpha * float(resid[-1]) ** 2 + params.beta * float(h[-1])
    if steps == 1:
        return np.array([h_next])
    rest = garch_variance_path(replace(params, h_last=h_next), steps - 1)
    return np.concatenate([[h_next], rest])


def _expanding_residuals(panel: ReturnPanel, asof: dt.date, horizon: int) -> np.ndarray:
    """Return-minus-rolling-mean residuals for every window end through ``asof``."""
    end = panel.index_of(asof)
    rows = panel.returns[: end + 1]
    if rows.shape[0] < horizon:
        raise InsufficientDataError(
            f"need {horizon} observations for residuals, have {rows.shape[0]}"
        )
    views = sliding_window_view(rows, horizon, axis=0)  # (M, N, F)
    return rows[horizon - 1 :] - views.mean(axis=2)


def _fit_univariate(resid: np.ndarray, min_obs: int) -> tuple[list[GarchParams], np.ndarray]:
    """Per-asset GARCH fits plus the matrix of standardized residuals."""
    t_obs, n = resid.shape
    if t_obs < min_obs:
        raise InsufficientDataError(f"need {min_obs} residual rows, have {t_obs}")
    fits = []
    z = np.empty_like(resid)
    for i in range(n):
        params = fit_garch11(resid[:, i], min_obs=min_obs)
        fits.append(params)
        h = garch_conditional_variances(resid[:, i], params)
        z[:, i] = resid[:, i] / np.sqrt(h)
    if not np.all(np.isfinite(z)):
        raise NumericalError("standardized residuals are non-finite")
    return fits, z


def _sample_correlation(z: np.ndarray) -> np.ndarray:
    if z.shape[1] == 1:
        return np.ones((1, 1))
    corr = np.corrcoef(z, rowvar=False)
    if not np.all(np.isfinite(corr)):
        raise NumericalError("correlation of standardized residuals is non-finite")
    return 0.5 * (corr + corr.T)


def _unit_diagonal(q: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(q))
    r = q / np.outer(d, d)
    r = 0.5 * (r + r.T)
    np.fill_diagonal(r, 1.0)
    return r


def _average_cov(corrs: np.ndarray, vol_paths: np.ndarray, asof, window) -> CovMatrix:
    """Average D_f R_f D_f over the horizon; corrs is (F, N, N), vol_paths (F, N) variances."""
    sig = np.sqrt(vol_paths)
    values = np.einsum("fij,fi,fj->ij", corrs, sig, sig) / corrs.shape[0]
    return CovMatrix(values=0.5 * (values + values.T), asof=asof, window=window)


def forecast_ccc(
    panel: ReturnPanel, asof: dt.date, horizon: int, min_obs: int = DEFAULT_MIN_OBS
) -> CovMatrix:
    """Constant-correlation forecast: fixed correlation, per-step GARCH volatilities."""
    resid = _expanding_residuals(panel, asof, horizon)
    fits, z = _fit_univariate(resid, min_obs)
    corr = _sample_correlation(z)
    vpaths = np.column_stack(
        [_seeded_variance_path(resid[:, i], fits[i], horizon) for i in range(resid.shape[1])]
    )
    corrs = np.broadcast_to(corr, (horizon, *corr.shape))
    end = panel.index_of(asof)
    window = (panel.dates[end - horizon + 1], asof)
    return _average_cov(corrs, vpaths, asof, window)


def fit_dcc(
    z: np.ndarray, qbar: np.ndarray | None = None, min_obs: int = DEFAULT_MIN_OBS
) -> DccParams:
    """Second-stage correlation fit on standardized residuals.

    Maximizes the Gaussian correlation quasi-likelihood over the news and
    persistence coefficients, with the recursion target fixed at ``qbar``
    (the sample correlation of z unless an override, e.g. a shrunk matrix,
    is supplied). Falls back to (0.02, 0.95) if the optimizer fails.
    """
    z = np.asarray(z, dtype=np.float64)
    t_obs, n = z.shape
    if t_obs < min_obs:
        raise InsufficientDataError(f"need {min_obs} rows of residuals, have {t_obs}")
    if qbar is None:
        qbar = _sample_correlation(z)
    outers = np.einsum("ti,tj->tij", z, z)
    z_tail = z[1:]

    def nll(theta):
        alpha, beta = _split_persistence(theta[0], theta[1])
        q = _q_recursion(qbar, outers, alpha, beta)
        d = np.sqrt(np.diagonal(q, axis1=1, axis2=2))
        r = q / (d[:, :, None] * d[:, None, :])
        sign, logdet = np.linalg.slogdet(r)
        if np.any(sign <= 0.0) or not np.all(np.isfinite(logdet)):
            return 1e10
        sol = np.linalg.solve(r, z_tail[:, :, None])[:, :, 0]
        quad = np.einsum("ti,ti->t", z_tail, sol) - np.einsum("ti,ti->t", z_tail, z_tail)
        return 0.5 * float(np.sum(logdet + quad))

    a0, b0 = _merge_persistence(*GARCH_FALLBACK)
    res = minimize(
        nll,
        np.array([a0, b0]),
        method="Nelder-Mead",
        options={"fatol": 1e-8, "xatol": 1e-8, "maxfev": 2000},
    )
    fallback = not (res.success and np.all(np.isfinite(res.x)))
    if fallback:
        alpha, beta = DCC_FALLBACK
    else:
        alpha, beta = _split_persistence(res.x[0], res.x[1])

    # Final state including the last observation, used as the forecast origin.
    q = _q_recursion(qbar, outers, alpha, beta)
    q_last = (1.0 - alpha - beta) * qbar + alpha * outers[-1] + beta * q[-1]
    return DccParams(
        alpha=float(alpha),
        beta=float(beta),
        qbar=qbar,
        q_last=q_last,
        r_last=_unit_diagonal(q_last),
        fallback=fallback,
    )


def _q_recursion(qbar: np.ndarray, outers: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Q_0 = qbar; Q_t = (1-a-b) qbar + a z_{t-1} z_{t-1}' + b Q_{t-1}, for t = 1..T-1."""
    x = (1.0 - alpha - beta) * qbar + alpha * outers[:-1]
    zi = beta * qbar[None, :, :]
    q_tail, _ = lfilter([1.0], [1.0, -beta], x, axis=0, zi=zi)
    return q_tail


def _dcc_correlation_path(params: DccParams, horizon: int) -> np.ndarray:
    """Per-step correlation forecasts decaying from the origin toward the target."""
    qbar_n = _unit_diagonal(params.qbar)
    s = params.alpha + params.beta
    pows = s ** np.arange(1, horizon + 1, dtype=np.float64)
    corrs = (1.0 - pows)[:, None, None] * qbar_n + pows[:, None, None] * params.r_last
    return np.stack([_unit_diagonal(c) for c in corrs])


def forecast_dcc(
    panel: ReturnPanel,
    asof: dt.date,
    horizon: int,
    min_obs: int = DEFAULT_MIN_OBS,
    shrink_target: bool = False,
) -> CovMatrix:
    """Dynamic-correlation forecast; with ``shrink_target`` the unconditional
    correlation matrix is denoised by nonlinear eigenvalue shrinkage first."""
    resid = _expanding_residuals(panel, asof, horizon)
    fits, z = _fit_univariate(resid, min_obs)
    qbar = _sample_correlation(z)
    if shrink_target:
        try:
            qbar = nl_shrink_correlation(qbar, z.shape[0])
        except (NumericalError, np.linalg.LinAlgError):
            qbar = None  # fall back to the plain sample target
    dcc = fit_dcc(z, qbar=qbar)
    corrs = _dcc_correlation_path(dcc, horizon)
    vpaths = np.column_stack(
        [_seeded_variance_path(resid[:, i], fits[i], horizon) for i in range(resid.shape[1])]
    )
    end = panel.index_of(asof)
    window = (panel.dates[end - horizon + 1], asof)
    return _average_cov(corrs, vpaths, asof, window)


def forecast_dcc_nl(
    panel: ReturnPanel, asof: dt.date, horizon: int, min_obs: int = DEFAULT_MIN_OBS
) -> CovMatrix:
    """DCC with the unconditional correlation target regularized by nonlinear shrinkage."""
    return forecast_dcc(panel, asof, horizon, min_obs=min_obs, shrink_target=True)


def nl_shrink_correlation(corr: np.ndarray, t_obs: int) -> np.ndarray:
    """Analytical nonlinear shrinkage of a sample correlation matrix's eigenvalues.

    Eigenvalues are mapped through the oracle shrinkage function built from
    an Epanechnikov kernel density estimate of the spectrum (per-eigenvalue
    bandwidth h * lambda_i with global h = T^-0.35) and the kernel's
    closed-form Hilbert transform. The reconstructed matrix is rescaled to
    an exact unit diagonal. Requires concentration c = N / T < 1.
    """
    corr = np.asarray(corr, dtype=np.float64)
    n = corr.shape[0]
    if corr.shape != (n, n) or np.max(np.abs(corr - corr.T)) > 1e-8:
        raise ValueError("input must be a symmetric correlation matrix")
    if np.max(np.abs(np.diag(corr) - 1.0)) > 1e-8:
        raise ValueError("input must have a unit diagonal")
    c = n / t_obs
    if c >= 1.0:
        raise NumericalError(f"concentration ratio {c:.3f} >= 1 is outside the supported regime")

    lam, vec = np.linalg.eigh(corr)
    lam = np.maximum(lam, 1e-12 * lam[-1])
    h = float(t_obs) ** (-0.35)
    bw = h * lam[None, :]  # per-eigenvalue kernel bandwidths
    x = (lam[:, None] - lam[None, :]) / bw

    sqrt5 = np.sqrt(5.0)
    kernel = (3.0 / (4.0 * sqrt5)) * np.maximum(1.0 - x**2 / 5.0, 0.0)
    f_hat = np.mean(kernel / bw, axis=1)

    with np.errstate(divide="ignore", invalid="ignore"):
        hilbert = (-3.0 / (10.0 * np.pi)) * x + (3.0 / (4.0 * sqrt5 * np.pi)) * (
            1.0 - x**2 / 5.0
        ) * np.log(np.abs((sqrt5 - x) / (sqrt5 + x)))
    on_edge = np.abs(x) == sqrt5
    hilbert[on_edge] = (-3.0 / (10.0 * np.pi)) * x[on_edge]
    hf_hat = np.mean(hilbert / bw, axis=1)

    denom = (np.pi * c * lam * f_hat) ** 2 + (1.0 - c - np.pi * c * lam * hf_hat) ** 2
    lam_star = lam / denom
    out = (vec * lam_star) @ vec.T
    d = np.diag(out).copy()
    if np.any(d <= 0.0):
        raise NumericalError("shrunk matrix lost positive diagonal")
    out = out / np.sqrt(np.outer(d, d))
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    return out
