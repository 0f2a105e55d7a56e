"""Recursive trend updates against direct weighted sums, and database build."""
import numpy as np
import pytest

from trendrev import market_data as md
from trendrev import trend


@pytest.mark.parametrize("k", [1, 3, 6, 10])
def test_recursion_matches_direct_sum(k):
    rng = np.random.default_rng(41 + k)
    xs = rng.standard_normal(5000)
    spec = trend.TrendSpec(k=k, cap=np.inf)
    direct = trend.direct_trend_series(xs, spec)
    # recompute the last value from the raw history as an independent check
    last = trend.direct_trend(xs, spec)
    assert direct[-1] == pytest.approx(last, rel=1e-12)
    T = float(spec.T)
    w = trend.weight_array("xexp", T, tail_eps=1e-30)
    for t in (2500, xs.size - 1):
        lags = min(w.size, t + 1)
        manual = float(np.dot(w[:lags], xs[t::-1][:lags]))
        assert abs(direct[t] - manual) < 1e-10


def test_ewma_recursion_closed_form():
    # psi_t = q psi_{t-1} + M x_t unrolls to M sum q^n x_{t-n}
    rng = np.random.default_rng(7)
    xs = rng.standard_normal(300)
    spec = trend.TrendSpec(k=3, scheme="ewma", cap=np.inf)
    got = trend.direct_trend_series(xs, spec)
    q, m, _ = trend.trend_constants(float(spec.T))
    want = np.zeros_like(xs)
    acc = 0.0
    for i, x in enumerate(xs):
        acc = q * acc + m * x
        want[i] = acc
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_step_scheme_is_plain_window_mean():
    rng = np.random.default_rng(3)
    xs = rng.standard_normal(64)
    spec = trend.TrendSpec(k=2, scheme="step", cap=np.inf)
    got = trend.direct_trend_series(xs, spec)
    T = 4
    for t in range(T - 1, xs.size):
        assert got[t] == pytest.approx(xs[t - T + 1: t + 1].sum() / 2.0, rel=1e-12)


def test_default_specs_cover_the_ten_horizons():
    specs = trend.default_specs()
    assert [s.k for s in specs] == list(range(1, 11))
    assert all(s.scheme == "xexp" and s.cap == 2.5 for s in specs)
    assert [s.T for s in specs] == [2 ** k for k in range(1, 11)]


def test_build_database_shape_and_cap(toy_panel):
    panel = toy_panel(n_markets=3, n_days=700, seed=5)
    db = trend.build_signal_database(panel, burn_in=100)
    assert db.n_scales == 10
    assert db.n_rows == 3 * (700 - 100)
    assert db.phi.shape == (db.n_rows, 10)
    assert np.all(db.phi <= 2.5) and np.all(db.phi >= -2.5)
    assert tuple(db.scale_ks) == tuple(range(1, 11))
    # emitted days start after the burn-in
    assert int(db.days.min()) == 100


def test_database_returns_are_the_normalized_panel(toy_panel):
    panel = toy_panel(n_markets=2, n_days=650, seed=11)
    db = trend.build_signal_database(panel, burn_in=60)
    for i in (0, 37, db.n_rows - 1):
        d, m = int(db.days[i]), int(db.market_codes[i])
        assert db.returns[i] == panel.normalized[d, m]


def test_signal_predicts_next_day_not_same_day(toy_panel):
    """The phi paired with day t must not include day t's return."""
    panel = toy_panel(n_markets=1, n_days=620, seed=2)
    db = trend.build_signal_database(panel, burn_in=80)
    xs = panel.excess[:, 0]
    raw = trend.direct_trend_series(xs, trend.TrendSpec(k=4))
    col = db.scale_column(4)
    for dd in (100, 300, 619):
        row = int(np.flatnonzero(db.days == dd)[0])
        want = trend.cap_floor(raw[dd - 1], 2.5)
        assert db.phi[row, col] == pytest.approx(want, rel=1e-12)


def test_premium_fraction_shifts_the_trend_input(toy_panel):
    panel = toy_panel(n_markets=2, n_days=640, seed=9)
    db0 = trend.build_signal_database(panel, burn_in=64, premium_fraction=0.0)
    db1 = trend.build_signal_database(panel, burn_in=64, premium_fraction=1.0)
    # f=0 feeds R - mu/sigma, f=1 feeds R itself; signals must differ
    assert not np.allclose(db0.phi, db1.phi)
    xs = panel.normalized[:, 0]
    raw = trend.direct_trend_series(xs, trend.TrendSpec(k=3))
    col = db1.scale_column(3)
    row = int(np.flatnonzero((db1.days == 200) & (db1.market_codes == 0))[0])
    assert db1.phi[row, col] == pytest.approx(trend.cap_floor(raw[199], 2.5), rel=1e-12)


def test_expand_long_view(toy_panel):
    panel = toy_panel(n_markets=2, n_days=630, seed=23)
    db = trend.build_signal_database(panel, burn_in=30)
    y, phi, k, day = db.expand()
    assert y.size == db.n_rows * 10
    assert phi.size == y.size == k.size == day.size
    # each row contributes its return once per scale
    np.testing.assert_array_equal(y[:10], np.repeat(db.returns[0], 10))
    np.testing.assert_array_equal(k[:10], np.arange(1, 11, dtype=float))
    y6, phi6, k6, _ = db.expand(scales=(6,))
    assert np.all(k6 == 6.0)
    np.testing.assert_array_equal(phi6, db.phi[:, db.scale_column(6)])


def test_select_by_market_and_day(toy_panel):
    panel = toy_panel(n_markets=3, n_days=630, seed=17)
    db = trend.build_signal_database(panel, burn_in=30)
    one = db.select(markets=["mkt1"])
    assert set(np.unique(one.market_codes)) == {db.markets.index("mkt1")}
    assert one.n_rows == 630 - 30
    window = db.select(days=np.arange(100, 200))
    assert window.unique_days().min() == 100
    assert window.unique_days().max() == 199
    mask = np.zeros(630, dtype=bool)
    mask[100:200] = True
    np.testing.assert_array_equal(db.select(days=mask).days, window.days)


def test_burn_in_bounds_checked(toy_panel):
    panel = toy_panel(n_markets=1, n_days=100, seed=1)
    with pytest.raises(ValueError):
        trend.build_signal_database(panel, burn_in=100)
    with pytest.raises(ValueError):
        trend.build_signal_database(panel, burn_in=-1)
