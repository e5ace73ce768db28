import datetime as dt

import numpy as np
import pytest

from covcast.data_ingest import (
    RegimeCalendar,
    default_regimes,
    load_prices,
    load_riskfree,
    to_returns,
)
from covcast.errors import AlignmentError, ConfigError, InsufficientDataError, ParseError

from synthetic import business_days, prices_from_returns, write_price_csv


def _write(path, rows, header="date,ticker,adj_close"):
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return path


def test_load_prices_intersection_drops_missing_dates(tmp_path):
    rows = [
        "2021-01-04,A,100", "2021-01-05,A,101", "2021-01-06,A,102",
        "2021-01-04,B,50", "2021-01-06,B,51",  # B misses the 5th
        "2021-01-04,C,10", "2021-01-05,C,11", "2021-01-06,C,12",
    ]
    panel = load_prices(_write(tmp_path / "p.csv", rows))
    assert [d.isoformat() for d in panel.dates] == ["2021-01-04", "2021-01-06"]
    assert panel.tickers == ("A", "B", "C")
    assert panel.prices.shape == (2, 3)


def test_load_prices_is_row_order_independent(tmp_path, rng):
    dates = business_days(dt.date(2021, 1, 1), 30)
    prices = prices_from_returns(0.01 * rng.standard_normal((29, 3)))
    rows = [
        f"{d.isoformat()},{t},{prices[i][j]}"
        for i, d in enumerate(dates)
        for j, t in enumerate(("X", "Y", "Z"))
    ]
    a = load_prices(_write(tmp_path / "a.csv", rows))
    shuffled = [rows[i] for i in rng.permutation(len(rows))]
    b = load_prices(_write(tmp_path / "b.csv", shuffled))
    assert a.dates == b.dates
    assert a.tickers == b.tickers
    np.testing.assert_array_equal(a.prices, b.prices)


def test_load_prices_non_numeric_cell_names_row(tmp_path):
    rows = ["2021-01-04,A,100", "2021-01-05,A,oops", "2021-01-04,B,50", "2021-01-05,B,51"]
    with pytest.raises(ParseError, match="row 3"):
        load_prices(_write(tmp_path / "p.csv", rows))


def test_load_prices_bad_date_names_row(tmp_path):
    rows = ["2021-01-04,A,100", "not-a-date,A,101", "2021-01-04,B,50"]
    with pytest.raises(ParseError, match="row 3"):
        load_prices(_write(tmp_path / "p.csv", rows))


def test_load_prices_too_few_assets(tmp_path):
    rows = ["2021-01-04,A,100", "2021-01-05,A,101"]
    with pytest.raises(InsufficientDataError):
        load_prices(_write(tmp_path / "p.csv", rows))


def test_load_prices_too_few_dates(tmp_path):
    rows = ["2021-01-04,A,100", "2021-01-04,B,50"]
    with pytest.raises(InsufficientDataError):
        load_prices(_write(tmp_path / "p.csv", rows))


def test_load_prices_custom_schema(tmp_path):
    rows = ["2021-01-04,A,100", "2021-01-05,A,101", "2021-01-04,B,9", "2021-01-05,B,10"]
    path = _write(tmp_path / "p.csv", rows, header="date,ticker,close_px")
    panel = load_prices(path, schema={"price": "close_px"})
    assert panel.prices[1, 1] == 10.0


def test_to_returns_arithmetic(tmp_path):
    rows = ["2021-01-04,A,100", "2021-01-05,A,110", "2021-01-04,B,50", "2021-01-05,B,50"]
    panel = load_prices(_write(tmp_path / "p.csv", rows))
    rets = to_returns(panel)
    assert rets.mode == "raw"
    np.testing.assert_allclose(rets.returns[0], [0.10, 0.0], atol=1e-15)
    assert rets.dates == (dt.date(2021, 1, 5),)


def test_to_returns_excess_subtracts_daily_rate(tmp_path):
    rows = ["2021-01-04,A,100", "2021-01-05,A,110", "2021-01-04,B,50", "2021-01-05,B,50"]
    panel = load_prices(_write(tmp_path / "p.csv", rows))
    # 2.52% annualized -> 0.0001 daily
    rf_path = tmp_path / "rf.csv"
    rf_path.write_text("date,rate_pct_annual\n2021-01-05,2.52\n", encoding="utf-8")
    riskfree = load_riskfree(rf_path)
    excess = to_returns(panel, riskfree=riskfree, mode="excess")
    np.testing.assert_allclose(excess.returns[0], [0.0999, -0.0001], atol=1e-15)


def test_excess_equals_raw_minus_riskfree_elementwise(tmp_path, rng):
    dates = business_days(dt.date(2021, 1, 1), 40)
    prices = prices_from_returns(0.01 * rng.standard_normal((39, 3)))
    write_price_csv(tmp_path / "p.csv", dates, ("A", "B", "C"), prices)
    panel = load_prices(tmp_path / "p.csv")
    # publish the rate only every third day to exercise forward fill
    rf_rows = [f"{d.isoformat()},{1.26}" for d in dates[::3]]
    (tmp_path / "rf.csv").write_text(
        "date,rate_pct_annual\n" + "\n".join(rf_rows) + "\n", encoding="utf-8"
    )
    riskfree = load_riskfree(tmp_path / "rf.csv")
    raw = to_returns(panel, mode="raw")
    excess = to_returns(panel, riskfree=riskfree, mode="excess")
    rf_daily = 1.26 / 100.0 / 252.0
    np.testing.assert_array_equal(excess.returns, raw.returns - rf_daily)


def test_excess_without_coverage_raises(tmp_path):
    rows = ["2021-01-04,A,100", "2021-01-05,A,110", "2021-01-04,B,50", "2021-01-05,B,52"]
    panel = load_prices(_write(tmp_path / "p.csv", rows))
    riskfree = {dt.date(2021, 2, 1): 0.0001}  # starts after the panel
    with pytest.raises(AlignmentError):
        to_returns(panel, riskfree=riskfree, mode="excess")


def test_constant_prices_give_zero_returns(tmp_path):
    rows = [
        f"2021-01-{4 + i:02d},{t},{p}"
        for i in range(3)
        for t, p in (("A", 100), ("B", 55))
    ]
    panel = load_prices(_write(tmp_path / "p.csv", rows))
    rets = to_returns(panel)
    np.testing.assert_array_equal(rets.returns, np.zeros((2, 2)))


def test_return_round_trip_through_prices(rng):
    returns = 0.02 * rng.standard_normal((60, 4))
    prices = prices_from_returns(returns)
    rebuilt = prices[1:] / prices[:-1] - 1.0
    np.testing.assert_allclose(rebuilt, returns, rtol=1e-12, atol=1e-14)


def test_default_regimes_match_published_calendar():
    cal = default_regimes()
    by_label = {lbl: (s, e) for lbl, s, e in cal.segments}
    assert by_label["Bear"][0] == dt.date(2022, 1, 3)
    assert by_label["Bear"][1] == dt.date(2022, 6, 12)
    assert by_label["Bull-2"][1] == dt.date(2023, 12, 31)
    assert by_label["Overall"] == (dt.date(2021, 1, 1), dt.date(2023, 12, 31))


def test_regime_segments_are_disjoint():
    cal = default_regimes()
    day = dt.date(2021, 1, 1)
    while day <= dt.date(2023, 12, 31):
        hits = [
            lbl for lbl, s, e in cal.segments if lbl != "Overall" and s <= day <= e
        ]
        assert len(hits) <= 1
        day += dt.timedelta(days=13)


def test_overlapping_regimes_rejected():
    with pytest.raises(ConfigError):
        RegimeCalendar(
            segments=(
                ("a", dt.date(2021, 1, 1), dt.date(2021, 6, 1)),
                ("b", dt.date(2021, 5, 1), dt.date(2021, 9, 1)),
            )
        )


def test_unknown_return_mode_rejected(tmp_path):
    rows = ["2021-01-04,A,100", "2021-01-05,A,110", "2021-01-04,B,50", "2021-01-05,B,52"]
    panel = load_prices(_write(tmp_path / "p.csv", rows))
    with pytest.raises(ConfigError):
        to_returns(panel, mode="log")
