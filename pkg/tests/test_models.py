"""Fit recovery on noiseless synthetic rows, transforms, and predictions."""
import math

import numpy as np
import pytest

from trendrev import models


A3, B3, C3 = 0.0133, 0.0129, -0.0062  # intercept + cubic set
B4, C4, K0, DK = 0.0200, -0.0063, 5.78, 4.87  # across-horizon set
B5, C5, QB, QC = 0.0191, -0.0062, 0.088, 0.047  # decaying-amplitude set


def grid_phi(n=4001, lim=2.5):
    return np.linspace(-lim, lim, n)


def test_cubic_identity_fit():
    phi = grid_phi()
    fit = models.fit_cubic(phi, phi, powers=(1,))
    assert fit.coefficients[0] == pytest.approx(1.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_cubic_noiseless_recovery():
    phi = grid_phi()
    y = A3 + B3 * phi + C3 * phi ** 3
    fit = models.fit_cubic(y, phi)
    a, b, c = fit.coefficients
    assert a == pytest.approx(A3, rel=1e-9)
    assert b == pytest.approx(B3, rel=1e-9)
    assert c == pytest.approx(C3, rel=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)
    assert fit.n_obs == phi.size


def test_cubic_extra_powers_vanish_when_absent():
    phi = grid_phi()
    y = A3 + B3 * phi + C3 * phi ** 3
    fit = models.fit_cubic(y, phi, powers=(0, 1, 2, 3))
    named = dict(zip([models.POWER_COEFF_NAMES[p] for p in fit.powers], fit.coefficients))
    assert named["d"] == pytest.approx(0.0, abs=1e-12)


def test_cubic_group_intercepts_match_dummies():
    rng = np.random.default_rng(0)
    phi = rng.uniform(-2, 2, 600)
    g = np.repeat(np.arange(3), 200)
    offsets = np.array([0.01, -0.02, 0.005])
    y = offsets[g] + B3 * phi + C3 * phi ** 3 + 0.001 * rng.standard_normal(600)
    fit = models.fit_cubic(y, phi, powers=(1, 3), groups=g)
    X = np.column_stack([
        (g == 0).astype(float), (g == 1).astype(float), (g == 2).astype(float),
        phi, phi ** 3,
    ])
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    assert fit.coefficients[0] == pytest.approx(beta[3], rel=1e-9)
    assert fit.coefficients[1] == pytest.approx(beta[4], rel=1e-9)
    np.testing.assert_allclose(fit.group_intercepts, beta[:3], rtol=1e-9)


def test_cubic_rejects_power_zero_with_groups():
    with pytest.raises(ValueError):
        models.fit_cubic(np.ones(10), np.ones(10), powers=(0, 1), groups=np.zeros(10, int))


def scale_rows():
    ks = np.arange(1, 11, dtype=float)
    phi = grid_phi(401)
    K, P = np.meshgrid(ks, phi)
    k = K.ravel()
    p = P.ravel()
    amp = B4 * (1.0 - ((k - K0) / DK) ** 2)
    y = amp * p + C4 * p ** 3
    return y, p, k


def test_scale_model_noiseless_recovery():
    y, p, k = scale_rows()
    fit = models.fit_scale_model(y, p, k)
    assert fit.b == pytest.approx(B4, rel=1e-8)
    assert fit.c == pytest.approx(C4, rel=1e-8)
    assert fit.k0 == pytest.approx(K0, rel=1e-8)
    assert fit.delta_k == pytest.approx(DK, rel=1e-8)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)
    assert not fit.flags


def test_scale_transform_roundtrip():
    y, p, k = scale_rows()
    fit = models.fit_scale_model(y, p, k)
    # betas are (phi, k phi, k^2 phi, phi^3); rebuild the parabola
    b0, b1, b2, b3 = fit.betas
    k0 = -b1 / (2.0 * b2)
    assert k0 == pytest.approx(K0, rel=1e-8)
    peak = b0 + b1 * k0 + b2 * k0 * k0
    assert peak == pytest.approx(B4, rel=1e-8)


def test_scale_transform_degenerate_flags():
    betas = np.array([0.01, 0.0, 0.0, -0.005])  # flat in k
    b, c, k0, dk, e, degenerate, bad_peak = models.scale_transform(betas)
    assert degenerate
    assert math.isnan(k0)
    assert c == pytest.approx(-0.005)
    # upward parabola has no peak either
    assert models.scale_transform(np.array([0.01, -0.002, 0.0004, -0.005]))[5]
    # downward parabola peaking below zero is flagged, not degenerate
    out = models.scale_transform(np.array([-0.05, 0.01, -0.001, -0.005]))
    assert not out[5] and out[6]
    assert out[2] == pytest.approx(5.0)  # k0 = -b1/(2 b2)


def test_critical_strength_closed_form():
    assert models.critical_strength(B4, C4) == pytest.approx(
        math.sqrt(B4 / abs(C4)), rel=1e-12
    )
    assert models.critical_strength(B4, C4) == pytest.approx(1.78, abs=0.005)
    assert models.critical_strength(0.0, C4) is None
    assert models.critical_strength(B4, 0.0) is None
    assert models.critical_strength(-0.01, C4) is None


def test_ellipse_boundary_shape():
    ks = np.linspace(K0 - DK, K0 + DK, 41)
    curve = models.ellipse_boundary(B4, C4, K0, DK, k_values=ks)
    # phi_c(k) = sqrt(b(k)/|c|): tallest at k0, zero at k0 +/- dk
    assert curve.phi_peak == pytest.approx(math.sqrt(B4 / abs(C4)), rel=1e-12)
    mid = np.argmin(np.abs(curve.k - K0))
    assert curve.phi_c[mid] == pytest.approx(curve.phi_peak, rel=1e-10)
    assert curve.phi_c[0] == pytest.approx(0.0, abs=1e-9)
    assert curve.phi_c[-1] == pytest.approx(0.0, abs=1e-9)
    # the implicit equation of the ellipse holds along the curve
    lhs = (curve.phi_c / curve.phi_peak) ** 2 + ((curve.k - K0) / DK) ** 2
    np.testing.assert_allclose(lhs, np.ones_like(lhs), rtol=1e-9)
    # strictly outside the support the curve is undefined
    out = models.ellipse_boundary(B4, C4, K0, DK, k_values=np.array([K0 + DK + 0.1]))
    assert np.isnan(out.phi_c[0])
    with pytest.raises(ValueError):
        models.ellipse_boundary(-0.01, C4, K0, DK)


def decay_rows(scenario="linear"):
    ks = np.arange(1, 11, dtype=float)
    phi = grid_phi(201)
    t = np.linspace(-14.0, 14.0, 29)  # years about the window midpoint
    K, P, Tm = np.meshgrid(ks, phi, t, indexing="ij")
    k, p, ty = K.ravel(), P.ravel(), Tm.ravel()
    amp = 1.0 - ((k - K0) / DK) ** 2
    if scenario == "linear":
        b_t = B5 * (1.0 - QB * ty)
        c_t = C5 * (1.0 - QC * ty)
    else:
        b_t = B5 * np.exp(-QB * ty)
        c_t = C5 * np.exp(-QC * ty)
    y = b_t * amp * p + c_t * p ** 3
    return y, p, k, ty


def test_decay_model_linear_recovery():
    y, p, k, ty = decay_rows("linear")
    fit = models.fit_decay_model(y, p, k, ty, scenario="linear", time_origin=0.0)
    assert fit.b_bar == pytest.approx(B5, rel=1e-6)
    assert fit.c_bar == pytest.approx(C5, rel=1e-6)
    assert fit.k0 == pytest.approx(K0, rel=1e-4)
    assert fit.delta_k == pytest.approx(DK, rel=1e-4)
    assert fit.q_b == pytest.approx(QB, rel=1e-4)
    assert fit.q_c == pytest.approx(QC, rel=1e-4)
    assert fit.scenario == "linear"


def test_decay_model_zero_decay_forced():
    y, p, k, ty = decay_rows("linear")
    fit = models.fit_decay_model(y, p, k, ty, scenario="linear",
                                 force_zero_decay=True, time_origin=0.0)
    assert fit.q_b == 0.0 and fit.q_c == 0.0


def test_predict_matches_manual_cubic():
    phi = grid_phi(101)
    y = A3 + B3 * phi + C3 * phi ** 3
    fit = models.fit_cubic(y, phi)
    got = models.predict(fit, phi)
    np.testing.assert_allclose(got, y, rtol=1e-9, atol=1e-12)


def test_predict_matches_manual_scale():
    y, p, k = scale_rows()
    fit = models.fit_scale_model(y, p, k)
    got = models.predict(fit, p, k=k)
    np.testing.assert_allclose(got, y, rtol=1e-7, atol=1e-12)


def test_aggregate_weights_equal_and_parabolic():
    ks = list(range(1, 11))
    w = models.aggregate_weights(ks, "equal")
    np.testing.assert_allclose(w, np.full(10, 0.1))
    y, p, k = scale_rows()
    fit = models.fit_scale_model(y, p, k)
    wp = models.aggregate_weights(ks, "parabolic", fit)
    assert wp.sum() == pytest.approx(1.0, rel=1e-12)
    # zero weight outside the ellipse support, peak near k0
    amp = B4 * (1.0 - ((np.array(ks) - K0) / DK) ** 2)
    np.testing.assert_array_equal(wp == 0.0, amp <= 0.0)
    assert ks[int(np.argmax(wp))] == 6


def test_aggregate_weights_need_fit_for_parabolic():
    with pytest.raises(ValueError):
        models.aggregate_weights([1, 2, 3], "parabolic")
    with pytest.raises(ValueError):
        models.aggregate_weights([1, 2, 3], "banana")


def test_fit_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        models.fit_scale_model(np.ones(5), np.ones(6), np.ones(6))
    with pytest.raises(ValueError):
        models.fit_cubic(np.ones(3), np.ones(3), powers=())
