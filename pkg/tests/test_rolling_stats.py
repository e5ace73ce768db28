import datetime as dt

import numpy as np
import pytest

from covcast.errors import ConfigError, InsufficientDataError
from covcast.rolling_stats import (
    CovMatrix,
    apply_scaler,
    build_sequences,
    fit_scaler,
    full_sample_cov,
    invert_scaler,
    realized_cov,
    realized_cov_series,
    rolling_moments,
)

from synthetic import gaussian_panel, panel_from_returns


def brute_force_moments(returns, window, end):
    """Direct summation of the trailing mean and F-1 variance."""
    rows = returns[end - window + 1 : end + 1]
    mu = rows.sum(axis=0) / window
    var = ((rows - mu) ** 2).sum(axis=0) / (window - 1)
    return mu, np.sqrt(var)


def brute_force_cov(returns, window, end):
    rows = returns[end - window + 1 : end + 1]
    mu = rows.mean(axis=0)
    n = rows.shape[1]
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = np.sum((rows[:, i] - mu[i]) * (rows[:, j] - mu[j])) / (window - 1)
    return out


def test_rolling_moments_hand_example():
    panel = panel_from_returns(np.array([[1.0], [2.0], [3.0]]))
    mom = rolling_moments(panel, 3)
    assert mom.mean.shape == (1, 1)
    assert mom.mean[0, 0] == pytest.approx(2.0)
    assert mom.std[0, 0] ** 2 == pytest.approx(1.0)


def test_rolling_moments_constant_series_zero_variance():
    panel = panel_from_returns(np.full((6, 2), 0.01))
    mom = rolling_moments(panel, 4)
    np.testing.assert_array_equal(mom.std, np.zeros_like(mom.std))


def test_rolling_moments_matches_brute_force(rng):
    returns = 0.02 * rng.standard_normal((5, 3))
    panel = panel_from_returns(returns)
    mom = rolling_moments(panel, 4)
    for k, end in enumerate(range(3, 5)):
        mu, sd = brute_force_moments(returns, 4, end)
        np.testing.assert_allclose(mom.mean[k], mu, atol=1e-15)
        np.testing.assert_allclose(mom.std[k], sd, atol=1e-15)


def test_rolling_moments_insufficient_history():
    panel = panel_from_returns(np.zeros((3, 2)))
    with pytest.raises(InsufficientDataError):
        rolling_moments(panel, 4)


def test_realized_cov_perfectly_correlated_pair(rng):
    x = rng.standard_normal(15)
    panel = panel_from_returns(np.column_stack([x, 2 * x]))
    cov = realized_cov(panel, 15, panel.dates[-1])
    assert cov.values[0, 1] == pytest.approx(2 * cov.values[0, 0], rel=1e-12)


def test_realized_cov_diagonal_matches_rolling_variance(rng):
    returns = 0.02 * rng.standard_normal((30, 4))
    panel = panel_from_returns(returns)
    mom = rolling_moments(panel, 10)
    for end in (9, 15, 29):
        cov = realized_cov(panel, 10, panel.dates[end])
        np.testing.assert_allclose(
            np.diag(cov.values), mom.std[end - 9] ** 2, rtol=1e-12, atol=1e-18
        )


def test_realized_cov_matches_brute_force(rng):
    returns = rng.standard_normal((20, 3))
    panel = panel_from_returns(returns)
    cov = realized_cov(panel, 20, panel.dates[-1])
    np.testing.assert_allclose(cov.values, brute_force_cov(returns, 20, 19), atol=1e-14)


def test_realized_cov_series_agrees_with_pointwise(rng):
    returns = 0.01 * rng.standard_normal((25, 3))
    panel = panel_from_returns(returns)
    series = realized_cov_series(panel, 6)
    assert len(series) == 20
    for c in series[::5]:
        single = realized_cov(panel, 6, c.asof)
        np.testing.assert_allclose(c.values, single.values, atol=1e-16)
        assert c.window == single.window


def test_realized_is_symmetric_psd_sweep(rng):
    panel = gaussian_panel(120, 5, seed=7)
    for c in realized_cov_series(panel, 15)[::7]:
        assert c.max_asymmetry() < 1e-12
        assert c.min_eigenvalue() >= -1e-10 * np.trace(c.values)


def test_full_sample_cov_equals_realized_on_same_window(rng):
    returns = rng.standard_normal((12, 3))
    panel = panel_from_returns(returns)
    full = full_sample_cov(panel, panel.dates[-1])
    rolled = realized_cov(panel, 12, panel.dates[-1])
    np.testing.assert_allclose(full.values, rolled.values, atol=1e-16)


def test_full_sample_cov_changes_with_information_set(rng):
    returns = rng.standard_normal((30, 2))
    panel = panel_from_returns(returns)
    a = full_sample_cov(panel, panel.dates[-2])
    b = full_sample_cov(panel, panel.dates[-1])
    assert not np.allclose(a.values, b.values)


def test_full_sample_cov_matches_numpy(rng):
    returns = rng.standard_normal((40, 4))
    panel = panel_from_returns(returns)
    got = full_sample_cov(panel, panel.dates[-1]).values
    np.testing.assert_allclose(got, np.cov(returns, rowvar=False), atol=1e-14)


def test_scaler_round_trip(rng):
    covs = rng.standard_normal((8, 3, 3))
    scaler = fit_scaler(covs)
    np.testing.assert_allclose(
        invert_scaler(scaler, apply_scaler(scaler, covs)), covs, atol=1e-12
    )


def test_scaler_zero_variance_clamps_to_one(rng):
    base = rng.standard_normal((3, 3))
    scaler = fit_scaler(np.stack([base] * 5))
    np.testing.assert_array_equal(scaler.stds, np.ones((3, 3)))
    np.testing.assert_allclose(apply_scaler(scaler, base), np.zeros((3, 3)), atol=1e-15)


def test_scaled_training_set_has_unit_moments(rng):
    covs = 3.0 + 2.0 * rng.standard_normal((50, 4, 4))
    scaler = fit_scaler(covs)
    scaled = apply_scaler(scaler, covs)
    np.testing.assert_allclose(scaled.mean(axis=0), np.zeros((4, 4)), atol=1e-12)
    np.testing.assert_allclose(scaled.std(axis=0), np.ones((4, 4)), atol=1e-12)


def test_scaler_requires_two_matrices(rng):
    with pytest.raises(InsufficientDataError):
        fit_scaler(rng.standard_normal((1, 2, 2)))
    with pytest.raises(InsufficientDataError):
        fit_scaler([])


def _cov_list(rng, count, n=3):
    dates = [dt.date(2021, 1, 1) + dt.timedelta(days=i) for i in range(count)]
    return [
        CovMatrix(values=np.eye(n) + 0.1 * k, asof=d, window=(d, d))
        for k, d in enumerate(dates)
    ]


def test_build_sequences_count_and_shape(rng):
    covs = _cov_list(rng, 10)
    scaler = fit_scaler([c.values for c in covs] and np.stack([c.values for c in covs]))
    seqs = build_sequences(covs, 3, scaler)
    assert len(seqs) == 7
    assert all(s.matrices.shape == (4, 3, 3) for s in seqs)
    assert seqs[0].asof == covs[3].asof
    assert seqs[-1].raw_last is covs[-1]


def test_build_sequences_zero_lookback_single_matrix(rng):
    covs = _cov_list(rng, 4)
    scaler = fit_scaler(np.stack([c.values for c in covs]))
    seqs = build_sequences(covs, 0, scaler)
    assert len(seqs) == 4
    assert seqs[0].matrices.shape == (1, 3, 3)


def test_build_sequences_identical_matrices_scale_to_zero(rng):
    base = np.eye(2)
    dates = [dt.date(2021, 1, 1) + dt.timedelta(days=i) for i in range(5)]
    covs = [CovMatrix(values=base.copy(), asof=d, window=(d, d)) for d in dates]
    scaler = fit_scaler(np.stack([base] * 5))
    seqs = build_sequences(covs, 2, scaler)
    np.testing.assert_array_equal(seqs[0].matrices, np.zeros((3, 2, 2)))


def test_build_sequences_too_short(rng):
    covs = _cov_list(rng, 3)
    scaler = fit_scaler(np.stack([c.values for c in covs]))
    with pytest.raises(InsufficientDataError):
        build_sequences(covs, 3, scaler)


def test_window_validation():
    panel = panel_from_returns(np.zeros((10, 2)))
    with pytest.raises(ConfigError):
        realized_cov(panel, 1, panel.dates[-1])
