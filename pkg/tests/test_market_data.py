"""Panel construction, normalization conventions, and file round trips."""
import numpy as np
import pytest

from trendrev import market_data as md

from conftest import business_days


def test_log_returns_on_hand_prices():
    dates = business_days(3)
    ps = md.PriceSeries("x", dates, np.array([100.0, 110.0, 99.0]))
    rs = md.compute_log_returns(ps)
    assert rs.values == pytest.approx([np.log(1.1), np.log(99.0 / 110.0)])
    # one fewer observation than prices, dated at the later day
    np.testing.assert_array_equal(rs.dates, dates[1:])


def test_log_returns_reject_bad_prices():
    dates = business_days(3)
    with pytest.raises(ValueError):
        md.compute_log_returns(md.PriceSeries("x", dates, np.array([100.0, -1.0, 99.0])))
    with pytest.raises(ValueError):
        md.compute_log_returns(md.PriceSeries("x", dates[:1], np.array([100.0])))


def test_normalization_uses_population_moments():
    dates = business_days(4)
    vals = np.array([0.01, -0.02, 0.03, 0.02])
    panel = md.normalize_panel([md.ReturnSeries("a", dates, vals)])
    mu = vals.mean()
    sigma = vals.std()  # ddof=0
    assert panel.mu[0] == pytest.approx(mu, rel=1e-15)
    assert panel.sigma[0] == pytest.approx(sigma, rel=1e-15)
    np.testing.assert_allclose(panel.normalized[:, 0], vals / sigma, rtol=1e-15)
    np.testing.assert_allclose(
        panel.excess[:, 0], vals / sigma - mu / sigma, rtol=1e-14, atol=1e-16
    )
    # normalized returns have unit population variance by construction
    assert panel.normalized[:, 0].std() == pytest.approx(1.0, rel=1e-12)


def test_union_calendar_zero_fill():
    d = business_days(5)
    a = md.ReturnSeries("a", d, np.array([0.01, -0.02, 0.015, 0.0, 0.03]))
    b = md.ReturnSeries("b", d[[0, 2, 4]], np.array([0.02, -0.01, 0.04]))
    panel = md.normalize_panel([a, b])
    assert panel.n_days == 5
    raw_b = panel.raw[:, list(panel.markets).index("b")]
    np.testing.assert_array_equal(raw_b[[1, 3]], [0.0, 0.0])
    np.testing.assert_array_equal(raw_b[[0, 2, 4]], [0.02, -0.01, 0.04])


def test_estimation_window_restricts_mu_sigma():
    dates = business_days(6)
    vals = np.array([0.01, 0.02, 0.03, 10.0, 10.0, 10.0])
    window = np.zeros(6, dtype=bool)
    window[:3] = True
    panel = md.normalize_panel([md.ReturnSeries("a", dates, vals)], estimation_window=window)
    assert panel.mu[0] == pytest.approx(vals[:3].mean())
    assert panel.sigma[0] == pytest.approx(vals[:3].std())
    np.testing.assert_array_equal(panel.estimation_mask, window)
    # the full panel is still normalized, by the window's constants
    assert panel.normalized.shape == (6, 1)
    assert panel.normalized[5, 0] == pytest.approx(10.0 / vals[:3].std())


def test_zero_variance_market_rejected():
    dates = business_days(4)
    with pytest.raises(ValueError):
        md.normalize_panel([md.ReturnSeries("flat", dates, np.full(4, 0.01))])


def test_splice_prefers_base_after_boundary():
    d = business_days(6)
    base = md.ReturnSeries("es", d[2:], np.full(4, 0.01))
    proxy = md.ReturnSeries("spx", d, np.full(6, 0.005))
    out = md.splice_returns(base, proxy, d[2], leverage=2.0, financing_rate=0.001)
    assert out.dates.size == 6
    # head: levered proxy minus financing on the borrowed share
    assert out.values[0] == pytest.approx(2.0 * 0.005 - 1.0 * 0.001)
    assert out.values[2] == pytest.approx(0.01)
    assert out.market_id == "es"


def test_splice_output_dates_strictly_increase():
    d = business_days(8)
    base = md.ReturnSeries("es", d[3:], np.full(5, 0.01))
    proxy = md.ReturnSeries("spx", d[:5], np.full(5, 0.005))
    out = md.splice_returns(base, proxy, d[3])
    assert np.all(np.diff(out.dates.astype("int64")) > 0)
    assert out.dates.size == 8


def test_prices_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    d = business_days(40)
    series = [
        md.PriceSeries("alpha", d, 100.0 * np.exp(np.cumsum(0.01 * rng.standard_normal(40)))),
        md.PriceSeries("beta", d[5:], 50.0 * np.exp(np.cumsum(0.02 * rng.standard_normal(35)))),
    ]
    path = tmp_path / "prices.csv"
    md.write_prices(series, path)
    back = md.read_prices(path)
    assert [s.market_id for s in back] == ["alpha", "beta"]
    for orig, rt in zip(series, back):
        np.testing.assert_array_equal(orig.dates, rt.dates)
        np.testing.assert_array_equal(orig.prices, rt.prices)


def test_read_prices_error_messages(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("date,market,close\n")
    with pytest.raises(ValueError, match="header"):
        md.read_prices(p)
    p.write_text("date,market,price\n2020-01-02,x,not_a_number\n")
    with pytest.raises(ValueError, match="line 2"):
        md.read_prices(p)


def test_database_roundtrip_bit_exact(tmp_path, toy_panel):
    from trendrev import trend

    panel = toy_panel(n_markets=2, n_days=620, seed=3)
    db = trend.build_signal_database(panel, burn_in=60)
    path = tmp_path / "signals.csv"
    md.write_database(db, path)
    back = md.read_database(path)
    np.testing.assert_array_equal(db.days, back.days)
    np.testing.assert_array_equal(db.market_codes, back.market_codes)
    assert db.markets == back.markets
    np.testing.assert_array_equal(db.returns, back.returns)
    np.testing.assert_array_equal(db.phi, back.phi)
    assert db.scale_ks == back.scale_ks


def test_horizon_labels_follow_doubling():
    assert md.HORIZON_LABELS[1] == "2d"
    assert md.HORIZON_LABELS[6] == "3m"
    assert md.HORIZON_LABELS[10] == "4y"
    assert len(md.HORIZON_LABELS) == 10


def test_panel_from_prices_matches_manual_chain():
    d = business_days(30)
    rng = np.random.default_rng(8)
    prices = 100.0 * np.exp(np.cumsum(0.01 * rng.standard_normal(30)))
    panel = md.panel_from_prices([md.PriceSeries("one", d, prices)])
    manual = np.diff(np.log(prices))
    np.testing.assert_allclose(panel.raw[:, 0], manual, rtol=1e-12, atol=1e-14)
    assert panel.n_days == 29
