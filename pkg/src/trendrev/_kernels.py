"""Numeric kernels, each shipped as a numba loop kernel plus a numpy fallback.

The hot paths of this package are a handful of tight loops: the two-stage
trend recursion over days x markets x horizons, the feedback simulator's day
loop, per-day regression cross products, bootstrap re-accumulation over
resampled days, and Langevin path integration. Each has

* a plain-Python loop implementation compiled with ``numba.njit(cache=True)``
  when numba is importable, and
* a vectorized (or, for scalar recursions, interpreted) numpy twin.

Set ``TRENDREV_DISABLE_NUMBA=1`` in the environment to force the numpy path.
``BACKEND`` reports which variant is bound. The sequential recursions use the
same per-element operation order in both variants, so those agree bit for
bit; reduction-style kernels (stats, bootstrap) may differ by rounding only.

``benchmarks/bench_kernels.py`` times the two variants side by side.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

_DISABLED = os.environ.get("TRENDREV_DISABLE_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)
USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# trend recursion: psi' = q psi + M x ; phi' = q phi + (N/M) psi'
# ---------------------------------------------------------------------------


def _trend_recursion_loops(xhat, q, m_norm, n_norm):
    n_days, n_markets = xhat.shape
    n_scales = q.shape[0]
    phi_lag = np.empty((n_days, n_markets, n_scales))
    psi = np.zeros((n_markets, n_scales))
    phi = np.zeros((n_markets, n_scales))
    for t in range(n_days):
        for i in range(n_markets):
            x = xhat[t, i]
            for s in range(n_scales):
                phi_lag[t, i, s] = phi[i, s]
                p = q[s] * psi[i, s] + m_norm[s] * x
                psi[i, s] = p
                phi[i, s] = q[s] * phi[i, s] + (n_norm[s] / m_norm[s]) * p
    return phi_lag, psi, phi


def _trend_recursion_numpy(xhat, q, m_norm, n_norm):
    # day loop with the cross-section vectorized; same op order as the loops
    n_days, n_markets = xhat.shape
    n_scales = q.shape[0]
    phi_lag = np.empty((n_days, n_markets, n_scales))
    psi = np.zeros((n_markets, n_scales))
    phi = np.zeros((n_markets, n_scales))
    ratio = n_norm / m_norm
    for t in range(n_days):
        phi_lag[t] = phi
        psi = q * psi + m_norm * xhat[t, :, None]
        phi = q * phi + ratio * psi
    return phi_lag, psi, phi


# ---------------------------------------------------------------------------
# feedback simulator day loop
# ---------------------------------------------------------------------------
#
# Signal for market i on day t:
#   lin_t[t] * sum_s lin_w[i,s]*g(phi) + cub_t[t] * sum_s cub_w[i,s]*g(phi)^3
# with g = clip to +-feedback_cap (pass inf for no clipping). lin_t/cub_t
# carry slow amplitude decay; pass ones for the stationary case. Returns the
# day index at which |phi| first exceeded abort_level, or -1 if it never did.


def _simulate_loops(
    eps, q, m_norm, n_norm, lin_w, cub_w, lin_t, cub_t, feedback_cap, abort_level
):
    n_days, n_markets = eps.shape
    n_scales = q.shape[0]
    xhat = np.empty((n_days, n_markets))
    psi = np.zeros((n_markets, n_scales))
    phi = np.zeros((n_markets, n_scales))
    for t in range(n_days):
        for i in range(n_markets):
            lin_sum = 0.0
            cub_sum = 0.0
            for s in range(n_scales):
                g = phi[i, s]
                if g > feedback_cap:
                    g = feedback_cap
                elif g < -feedback_cap:
                    g = -feedback_cap
                lin_sum += lin_w[i, s] * g
                cub_sum += cub_w[i, s] * (g * g * g)
            xhat[t, i] = lin_t[t] * lin_sum + cub_t[t] * cub_sum + eps[t, i]
        for i in range(n_markets):
            x = xhat[t, i]
            for s in range(n_scales):
                p = q[s] * psi[i, s] + m_norm[s] * x
                psi[i, s] = p
                f = q[s] * phi[i, s] + (n_norm[s] / m_norm[s]) * p
                phi[i, s] = f
                if f > abort_level or f < -abort_level:
                    return xhat, psi, phi, t
    return xhat, psi, phi, -1


def _simulate_numpy(
    eps, q, m_norm, n_norm, lin_w, cub_w, lin_t, cub_t, feedback_cap, abort_level
):
    n_days, n_markets = eps.shape
    n_scales = q.shape[0]
    xhat = np.empty((n_days, n_markets))
    psi = np.zeros((n_markets, n_scales))
    phi = np.zeros((n_markets, n_scales))
    ratio = n_norm / m_norm
    for t in range(n_days):
        lin_sum = np.zeros(n_markets)
        cub_sum = np.zeros(n_markets)
        for s in range(n_scales):  # sequential to match the loop kernel bitwise
            g = np.minimum(feedback_cap, np.maximum(-feedback_cap, phi[:, s]))
            lin_sum += lin_w[:, s] * g
            cub_sum += cub_w[:, s] * (g * g * g)
        x = lin_t[t] * lin_sum + cub_t[t] * cub_sum + eps[t]
        xhat[t] = x
        psi = q * psi + m_norm * x[:, None]
        phi = q * phi + ratio * psi
        if np.max(np.abs(phi)) > abort_level:
            return xhat, psi, phi, t
    return xhat, psi, phi, -1


# ---------------------------------------------------------------------------
# per-day regression cross products
# ---------------------------------------------------------------------------
#
# Layout per day: upper triangle of X'X (p*(p+1)/2), then X'y (p), then y'y,
# then the row count. Rows must arrive sorted by day slot.


def day_stats_width(p: int) -> int:
    return p * (p + 1) // 2 + p + 2


def _day_stats_loops(X, y, day_slot, n_days):
    n_rows, p = X.shape
    n_xx = p * (p + 1) // 2
    out = np.zeros((n_days, n_xx + p + 2))
    for r in range(n_rows):
        d = day_slot[r]
        idx = 0
        for a in range(p):
            xa = X[r, a]
            for b in range(a, p):
                out[d, idx] += xa * X[r, b]
                idx += 1
        for a in range(p):
            out[d, n_xx + a] += X[r, a] * y[r]
        out[d, n_xx + p] += y[r] * y[r]
        out[d, n_xx + p + 1] += 1.0
    return out


def _day_stats_numpy(X, y, day_slot, n_days):
    n_rows, p = X.shape
    n_xx = p * (p + 1) // 2
    width = n_xx + p + 2
    out = np.zeros((n_days, width))
    if n_rows == 0:
        return out
    iu, ju = np.triu_indices(p)
    chunk = max(1, 2_000_000 // max(1, width))
    start = 0
    while start < n_rows:
        stop = min(n_rows, start + chunk)
        # keep day groups whole so reduceat boundaries are exact
        while stop < n_rows and day_slot[stop] == day_slot[stop - 1]:
            stop += 1
        Xc = X[start:stop]
        yc = y[start:stop]
        prod = np.empty((stop - start, width))
        prod[:, :n_xx] = Xc[:, iu] * Xc[:, ju]
        prod[:, n_xx : n_xx + p] = Xc * yc[:, None]
        prod[:, n_xx + p] = yc * yc
        prod[:, n_xx + p + 1] = 1.0
        slots = day_slot[start:stop]
        bounds = np.flatnonzero(np.diff(slots)) + 1
        starts = np.concatenate(([0], bounds))
        sums = np.add.reduceat(prod, starts, axis=0)
        out[slots[starts]] += sums
        start = stop
    return out


# ---------------------------------------------------------------------------
# bootstrap: sum day-stat rows over resampled day indices
# ---------------------------------------------------------------------------


def _bootstrap_accumulate_loops(stats, draws):
    n_rep, n_draw = draws.shape
    width = stats.shape[1]
    out = np.zeros((n_rep, width))
    for r in range(n_rep):
        for j in range(n_draw):
            d = draws[r, j]
            for c in range(width):
                out[r, c] += stats[d, c]
    return out


def _bootstrap_accumulate_numpy(stats, draws):
    n_rep, _ = draws.shape
    n_days = stats.shape[0]
    out = np.empty((n_rep, stats.shape[1]))
    chunk = max(1, 50_000_000 // max(1, n_days * 8))
    for start in range(0, n_rep, chunk):
        stop = min(n_rep, start + chunk)
        counts = np.zeros((stop - start, n_days))
        for r in range(start, stop):
            counts[r - start] = np.bincount(draws[r], minlength=n_days)
        out[start:stop] = counts @ stats
    return out


# ---------------------------------------------------------------------------
# Langevin integrators (explicit Euler-Maruyama)
# ---------------------------------------------------------------------------
#
# Potential convention: V(x) = quad*x^2 + quart*x^4, so V'(x) = 2*quad*x +
# 4*quart*x^3. First-order form: dx = (-damping*x - V'(x)) dt + noise dW.
# Second-order form integrates (d/dt + damping)^2 x = -V'(x) + noise eps via
# u = x' + damping*x. Returns (path, abort_step) with abort_step = -1 when
# the path stayed within abort_level.


def _langevin_first_order_loops(xi, dt, damping, quad, quart, noise, init, abort_level):
    n = xi.shape[0]
    path = np.empty(n + 1)
    path[0] = init
    x = init
    sq = np.sqrt(dt)
    for t in range(n):
        drift = -damping * x - (2.0 * quad * x + 4.0 * quart * (x * x * x))
        x = x + dt * drift + noise * sq * xi[t]
        path[t + 1] = x
        if x > abort_level or x < -abort_level:
            return path, t
    return path, -1


def _langevin_second_order_loops(
    xi, dt, damping, quad, quart, noise, init_x, init_u, abort_level
):
    n = xi.shape[0]
    path = np.empty(n + 1)
    path[0] = init_x
    x = init_x
    u = init_u
    sq = np.sqrt(dt)
    for t in range(n):
        force = -(2.0 * quad * x + 4.0 * quart * (x * x * x))
        x_new = x + dt * (u - damping * x)
        u = u + dt * (-damping * u + force) + noise * sq * xi[t]
        x = x_new
        path[t + 1] = x
        if x > abort_level or x < -abort_level:
            return path, t
    return path, -1


# scalar recursions cannot be vectorized over time; the numpy fallback is the
# same loop interpreted
_langevin_first_order_numpy = _langevin_first_order_loops
_langevin_second_order_numpy = _langevin_second_order_loops


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:
    _jit = njit(cache=True)
    trend_recursion_numba = _jit(_trend_recursion_loops)
    simulate_numba = _jit(_simulate_loops)
    day_stats_numba = _jit(_day_stats_loops)
    bootstrap_accumulate_numba = _jit(_bootstrap_accumulate_loops)
    langevin_first_order_numba = _jit(_langevin_first_order_loops)
    langevin_second_order_numba = _jit(_langevin_second_order_loops)
else:  # pragma: no cover
    trend_recursion_numba = None
    simulate_numba = None
    day_stats_numba = None
    bootstrap_accumulate_numba = None
    langevin_first_order_numba = None
    langevin_second_order_numba = None

trend_recursion_numpy = _trend_recursion_numpy
simulate_numpy = _simulate_numpy
day_stats_numpy = _day_stats_numpy
bootstrap_accumulate_numpy = _bootstrap_accumulate_numpy
langevin_first_order_numpy = _langevin_first_order_numpy
langevin_second_order_numpy = _langevin_second_order_numpy

if USE_NUMBA:
    trend_recursion = trend_recursion_numba
    simulate = simulate_numba
    day_stats = day_stats_numba
    bootstrap_accumulate = bootstrap_accumulate_numba
    langevin_first_order = langevin_first_order_numba
    langevin_second_order = langevin_second_order_numba
else:
    trend_recursion = trend_recursion_numpy
    simulate = simulate_numpy
    day_stats = day_stats_numpy
    bootstrap_accumulate = bootstrap_accumulate_numpy
    langevin_first_order = langevin_first_order_numpy
    langevin_second_order = langevin_second_order_numpy


def warm_up() -> None:
    """Trigger JIT compilation of every kernel on tiny inputs."""
    if not USE_NUMBA:
        return
    x = np.zeros((2, 2))
    q = np.array([0.5])
    m = np.array([0.8])
    n = np.array([0.4])
    trend_recursion(x, q, m, n)
    ones = np.ones(2)
    simulate(x, q, m, n, np.zeros((2, 1)), np.zeros((2, 1)), ones, ones, np.inf, 50.0)
    X = np.ones((3, 2))
    day_stats(X, np.ones(3), np.array([0, 0, 1], dtype=np.int64), 2)
    bootstrap_accumulate(np.ones((2, 3)), np.zeros((2, 2), dtype=np.int64))
    xi = np.zeros(3)
    langevin_first_order(xi, 0.1, 0.1, 0.0, 0.0, 1.0, 0.0, 50.0)
    langevin_second_order(xi, 0.1, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 50.0)
