"""Bootstrap, cross-validation, dimension and budget arithmetic."""
import numpy as np
import pytest

import trendrev as tr
from trendrev import market_data as md
from trendrev import trend
from trendrev.inference import (
    ModelSpec,
    bootstrap,
    cross_validate,
    derive_seed,
    dof_budget,
    effective_dimension,
    subset_analysis,
)
from trendrev.simulator import SimConfig, simulate_panel

from conftest import business_days

CUBIC = ModelSpec(kind="cubic", powers=(0, 1, 3))


def sim_db(seed=0, n_markets=6, n_days=2000, **kw):
    kw.setdefault("n_blocks", min(n_markets, 8))
    cfg = SimConfig(n_markets=n_markets, n_days=n_days, seed=seed, **kw)
    return trend.build_signal_database(simulate_panel(cfg))


def test_derive_seed_streams_are_separated():
    assert derive_seed(0, "x") == derive_seed(0, "x")
    assert derive_seed(0, "x") != derive_seed(0, "y")
    assert derive_seed(0, "x", 1) != derive_seed(0, "x", 2)
    assert derive_seed(1, "x") != derive_seed(2, "x")


def test_bootstrap_is_deterministic():
    db = sim_db(seed=3, feedback="none", b=0.0, c=0.0, n_blocks=6)
    r1 = bootstrap(db, CUBIC, n_samples=64, seed=11)
    r2 = bootstrap(db, CUBIC, n_samples=64, seed=11)
    for name in r1.names:
        np.testing.assert_array_equal(r1.draws[name], r2.draws[name])
    r3 = bootstrap(db, CUBIC, n_samples=64, seed=12)
    assert not np.array_equal(r1.draws["b"], r3.draws["b"])


def test_bootstrap_point_matches_direct_fit():
    db = sim_db(seed=5)
    res = bootstrap(db, CUBIC, n_samples=16, seed=0)
    y, phi, k, day = db.expand()
    from trendrev import models

    direct = models.fit_cubic(y, phi)
    for name, coef in zip(("a", "b", "c"), direct.coefficients):
        assert res.point[name] == pytest.approx(coef, rel=1e-12)


def test_bootstrap_error_shrinks_with_panel_length():
    # percentile spread should fall roughly like 1/sqrt(days)
    short = bootstrap(sim_db(seed=7, n_days=1300, feedback="none", b=0, c=0, n_blocks=6),
                      CUBIC, n_samples=400, seed=2)
    long = bootstrap(sim_db(seed=7, n_days=3700, feedback="none", b=0, c=0, n_blocks=6),
                     CUBIC, n_samples=400, seed=2)
    # 1300-522 = 778 emitted vs 3700-522 = 3178: ratio ~ 2.02
    ratio = short.error["b"] / long.error["b"]
    assert 1.4 < ratio < 2.9


def test_bootstrap_identical_markets_do_not_tighten_errors():
    """Perfectly correlated markets carry no extra information."""
    one = bootstrap(sim_db(seed=9, n_markets=2, n_blocks=2, feedback="none", b=0, c=0),
                    CUBIC, n_samples=300, seed=4)
    trip = bootstrap(sim_db(seed=9, n_markets=6, n_blocks=2, block_rho=1.0,
                            feedback="none", b=0, c=0),
                     CUBIC, n_samples=300, seed=4)
    assert trip.error["b"] == pytest.approx(one.error["b"], rel=0.35)


def test_bootstrap_percentiles_consistent_with_draws():
    db = sim_db(seed=1)
    res = bootstrap(db, CUBIC, n_samples=128, seed=6)
    lo, hi = res.percentiles("b", (16.0, 84.0))
    d = res.draws["b"]
    want = np.percentile(d[np.isfinite(d)], [16.0, 84.0])
    assert lo == pytest.approx(want[0], rel=1e-12)
    assert hi == pytest.approx(want[1], rel=1e-12)
    assert res.error["b"] == pytest.approx((want[1] - want[0]) / 2.0, rel=1e-12)


def test_bootstrap_counts_degenerate_replicates():
    # a pure-noise panel makes some scale-model draws degenerate
    db = sim_db(seed=13, feedback="none", b=0.0, c=0.0, n_blocks=6, n_days=1400)
    res = bootstrap(db, ModelSpec(kind="scale"), n_samples=200, seed=8)
    assert res.n_excluded == int(np.isnan(res.draws["b"]).sum())
    assert 0.0 <= res.excluded_fraction < 1.0
    assert isinstance(res.valid, bool)


def test_cv_fold_structure_matches_contract(toy_panel):
    # 7305 emitted days -> 15 folds of 487 contiguous days
    panel = toy_panel(n_markets=2, n_days=7827, seed=19)
    cv = cross_validate(panel, CUBIC, n_folds=15)
    assert cv.n_folds == 15
    sizes = [b - a + 1 for a, b in cv.fold_day_ranges]
    assert sizes == [487] * 15
    # contiguous, disjoint, exhaustive over the emitted range
    starts = [a for a, _ in cv.fold_day_ranges]
    ends = [b for _, b in cv.fold_day_ranges]
    assert starts[0] == 522 and ends[-1] == 7826
    for i in range(14):
        assert starts[i + 1] == ends[i] + 1
    # pooled cubic rows: 10 scale entries per (day, market)
    assert cv.n_predictions == 7305 * 2 * 10


def test_cv_remainder_goes_to_final_folds(toy_panel):
    panel = toy_panel(n_markets=2, n_days=1322, seed=23)  # 800 emitted
    cv = cross_validate(panel, CUBIC, n_folds=3, burn_in=522)
    sizes = [b - a + 1 for a, b in cv.fold_day_ranges]
    assert sizes == [266, 267, 267]


def test_cv_training_constants_exclude_validation_days(toy_panel):
    panel = toy_panel(n_markets=3, n_days=1500, seed=29)
    cv = cross_validate(panel, CUBIC, n_folds=5)
    for f, (a, b) in enumerate(cv.fold_day_ranges):
        inside = (np.arange(1500) >= a) & (np.arange(1500) <= b)
        emitted = np.zeros(1500, dtype=bool)
        emitted[522:] = True
        train = emitted & ~inside
        want_mu = panel.raw[train].mean(axis=0)
        np.testing.assert_allclose(cv.fold_mu[f], want_mu, rtol=1e-12)
        want_sd = panel.raw[train].std(axis=0)
        np.testing.assert_allclose(cv.fold_sigma[f], want_sd, rtol=1e-12)


def test_cv_frozen_sigma_option(toy_panel):
    panel = toy_panel(n_markets=2, n_days=1400, seed=31)
    cv = cross_validate(panel, CUBIC, n_folds=4, sigma_training_only=False)
    for f in range(4):
        np.testing.assert_allclose(cv.fold_sigma[f], panel.sigma, rtol=1e-14)


def test_cv_needs_enough_days(toy_panel):
    panel = toy_panel(n_markets=2, n_days=600, seed=1)
    with pytest.raises(ValueError):
        cross_validate(panel, CUBIC, n_folds=60)  # folds of one day
    with pytest.raises(ValueError):
        cross_validate(panel, CUBIC, n_folds=1)


def test_effective_dimension_limits():
    rng = np.random.default_rng(0)
    dates = business_days(4000)
    iid = [md.ReturnSeries(f"m{i}", dates, 0.01 * rng.standard_normal(4000))
           for i in range(24)]
    panel = md.normalize_panel(iid)
    nm = effective_dimension(panel).n_m
    assert nm == pytest.approx(24.0, rel=0.15)

    common = 0.01 * rng.standard_normal(4000)
    dup = [md.ReturnSeries(f"d{i}", dates, common + 1e-9 * rng.standard_normal(4000))
           for i in range(5)]
    panel1 = md.normalize_panel(dup)
    assert effective_dimension(panel1).n_m == pytest.approx(1.0, rel=0.05)


def test_effective_dimension_block_structure():
    cfg = SimConfig(n_markets=24, n_days=6000, feedback="none", b=0.0, c=0.0,
                    n_blocks=8, block_rho=1.0, seed=2)
    panel = simulate_panel(cfg)
    dim = effective_dimension(panel)
    assert dim.n_m == pytest.approx(8.0, rel=0.12)
    # 8 unit eigenvalue clusters should cover the variance quickly
    assert dim.components_for(0.95) <= 9


def test_dof_budget_worked_example():
    out = dof_budget(8.0, 28.0, 4e-4)
    assert out.n_data == 260 * 8 * 28
    assert out.max_params == 5
    assert out.daily_sharpe == pytest.approx(0.02, rel=1e-12)


def test_dof_budget_scales_with_erosion():
    assert dof_budget(8.0, 28.0, 4e-4, erosion_fraction=0.4).max_params > \
        dof_budget(8.0, 28.0, 4e-4, erosion_fraction=0.1).max_params


def test_subset_by_period_thirds_partitions_days():
    db = sim_db(seed=17, n_markets=4, n_days=2200)
    res = subset_analysis(db, "by_period_thirds", CUBIC, n_samples=40, seed=0)
    assert res.grouping == "by_period_thirds"
    lens = {}
    for name, bs in res.bootstraps.items():
        lens[name] = bs
    assert len(lens) == 3
    q = res.ratio_quantiles
    for name, (q16, q50, q84) in q.items():
        assert q16 <= q50 <= q84


def test_subset_by_asset_class_uses_mapping():
    db = sim_db(seed=19, n_markets=4, n_days=1800)
    classes = {"sim00": "rates", "sim01": "rates", "sim02": "equity", "sim03": "equity"}
    res = subset_analysis(db, "by_asset_class", CUBIC, asset_classes=classes,
                          n_samples=30, seed=1)
    assert set(res.bootstraps) == {"rates", "equity"}
    with pytest.raises(ValueError):
        subset_analysis(db, "by_asset_class", CUBIC, asset_classes={"sim00": "x"},
                        n_samples=10)
    with pytest.raises(ValueError):
        subset_analysis(db, "nope", CUBIC)
