"""Polynomial trend/reversion models fit by ordinary least squares.

Three nested specifications of the one-step-ahead regression of normalized
returns on lagged trend strengths:

* cubic: R(t+1) = a + b phi + d phi^2 + c phi^3 (+ optional quartic and
  quintic terms), fit on a single horizon or pooled across horizons.
* scale: R(t+1) = (beta0 + beta1 k + beta2 k^2) phi_k + c phi_k^3 across
  horizons k, reported in peak form b [1 - (k - k0)^2 / dk^2] phi + c phi^3.
  The peak form is an exact reparametrization of the quadratic-in-k linear
  model, so the fit itself stays linear.
* decay: scale model with linearly time-decaying amplitudes,
  b(t) = b_bar (1 - Q_b t) and c(t) = c_bar (1 - Q_c t) with t in years
  from a caller-chosen origin. (k0, dk) enter nonlinearly here, so they are
  profiled on a grid and polished with Nelder-Mead; for each candidate the
  remaining amplitude parameters are an exact linear solve contracted from
  precomputed day-level statistics, which keeps the profile cheap. The
  exponential variant replaces b(t) with b_bar exp(-Q t) and profiles Q too.

All fits go through accumulated normal equations so the same code path can
be driven by resampled per-day statistics during bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from . import _kernels

__all__ = [
    "CubicFit",
    "ScaleFit",
    "DecayFit",
    "fit_cubic",
    "fit_scale_model",
    "fit_decay_model",
    "critical_strength",
    "ellipse_boundary",
    "BoundaryCurve",
    "aggregate_weights",
    "predict",
    "scale_design",
    "decay_design",
    "scale_transform",
    "POWER_COEFF_NAMES",
    "SCALE_PARAM_NAMES",
    "DECAY_PARAM_NAMES",
]

POWER_COEFF_NAMES = {0: "a", 1: "b", 2: "d", 3: "c", 4: "quartic", 5: "quintic"}
_POWER_LABELS = {0: "1", 1: "phi", 2: "phi^2", 3: "phi^3", 4: "phi^4", 5: "phi^5"}
SCALE_PARAM_NAMES = ("b", "c", "k0", "delta_k")
DECAY_PARAM_NAMES = ("b_bar", "c_bar", "k0", "delta_k", "q_b", "q_c")


# ---------------------------------------------------------------------------
# normal-equation plumbing
# ---------------------------------------------------------------------------


def accumulate_normal_eq(X: np.ndarray, y: np.ndarray):
    """(XtX, Xty, yy, sum_y, n) sufficient statistics of an OLS problem."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return X.T @ X, X.T @ y, float(y @ y), float(y.sum()), y.size


def solve_normal_eq(M: np.ndarray, v: np.ndarray, names: Sequence[str], rcond: float = 1e-12):
    """Solve M theta = v with diagonal scaling; name the offenders if singular."""
    d = np.sqrt(np.diag(M))
    bad = [names[i] for i in range(d.size) if not d[i] > 0 or not np.isfinite(d[i])]
    if bad:
        raise ValueError(f"degenerate regressors (zero norm): {', '.join(bad)}")
    Ms = M / np.outer(d, d)
    w, V = np.linalg.eigh(Ms)
    if w[0] <= rcond * w[-1]:
        vec = np.abs(V[:, 0])
        involved = [names[i] for i in np.nonzero(vec > 0.3 * vec.max())[0]]
        raise ValueError(f"collinear regressors: {', '.join(involved)}")
    return np.linalg.solve(Ms, v / d) / d


def r_squared_from_stats(theta, M, v, yy: float, sum_y: float, n: int) -> float:
    """Centred R^2 = 1 - SSR/SST from sufficient statistics."""
    ssr = max(yy - 2.0 * float(theta @ v) + float(theta @ M @ theta), 0.0)
    sst = yy - sum_y * sum_y / n
    if not sst > 0:
        return float("nan")
    return 1.0 - ssr / sst


# ---------------------------------------------------------------------------
# cubic model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CubicFit:
    """Polynomial-in-phi regression result."""

    powers: Tuple[int, ...]
    coefficients: np.ndarray
    r_squared: float
    n_obs: int
    flags: Tuple[str, ...] = ()
    group_intercepts: Optional[np.ndarray] = None

    def coefficient(self, power: int) -> Optional[float]:
        try:
            return float(self.coefficients[self.powers.index(power)])
        except ValueError:
            return None

    @property
    def a(self):
        return self.coefficient(0)

    @property
    def b(self):
        return self.coefficient(1)

    @property
    def d(self):
        return self.coefficient(2)

    @property
    def c(self):
        return self.coefficient(3)

    @property
    def param_names(self) -> Tuple[str, ...]:
        return tuple(POWER_COEFF_NAMES[p] for p in self.powers)

    def to_dict(self) -> Dict[str, float]:
        out = {POWER_COEFF_NAMES[p]: float(c) for p, c in zip(self.powers, self.coefficients)}
        out["r_squared"] = self.r_squared
        return out


def fit_cubic(
    y: np.ndarray,
    phi: np.ndarray,
    powers: Sequence[int] = (0, 1, 3),
    groups: Optional[np.ndarray] = None,
) -> CubicFit:
    """OLS of y on powers of phi.

    ``powers`` selects terms from {0,...,5}; the default (0, 1, 3) is the
    intercept + linear + cubic model. With ``groups`` (integer labels per
    row) the pooled intercept is replaced by one intercept per group,
    absorbed by within-group demeaning; power 0 must then be left out.
    """
    y = np.asarray(y, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    powers = tuple(sorted(set(int(p) for p in powers)))
    if not powers:
        raise ValueError("need at least one power")
    if any(p < 0 or p > 5 for p in powers):
        raise ValueError("powers must lie in 0..5")
    if y.shape != phi.shape or y.ndim != 1:
        raise ValueError("y and phi must be matching 1-d arrays")
    if y.size <= len(powers):
        raise ValueError("more parameters than observations")

    names = [_POWER_LABELS[p] for p in powers]
    X = np.column_stack([phi ** p for p in powers])

    intercepts = None
    if groups is not None:
        if 0 in powers:
            raise ValueError("per-group intercepts replace the pooled one; drop power 0")
        g = np.asarray(groups)
        _, gidx, counts = np.unique(g, return_inverse=True, return_counts=True)
        ybar = np.bincount(gidx, weights=y) / counts
        y_w = y - ybar[gidx]
        X_w = X.copy()
        for j in range(X.shape[1]):
            cbar = np.bincount(gidx, weights=X[:, j]) / counts
            X_w[:, j] -= cbar[gidx]
        M, v, _, _, n = accumulate_normal_eq(X_w, y_w)
        theta = solve_normal_eq(M, v, names)
        resid = y - X @ theta
        intercepts = np.bincount(gidx, weights=resid) / counts
        resid = resid - intercepts[gidx]
        sst = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else float("nan")
        return CubicFit(powers, theta, r2, n, (), intercepts)

    M, v, yy, sy, n = accumulate_normal_eq(X, y)
    theta = solve_normal_eq(M, v, names)
    r2 = r_squared_from_stats(theta, M, v, yy, sy, n)
    return CubicFit(powers, theta, r2, n, ())


# ---------------------------------------------------------------------------
# scale model
# ---------------------------------------------------------------------------


def scale_design(phi: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Regressors [phi, k phi, k^2 phi, phi^3] of the scale model."""
    phi = np.asarray(phi, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    return np.column_stack([phi, k * phi, k * k * phi, phi ** 3])


def decay_design(phi: np.ndarray, k: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Regressors [phi, k phi, k^2 phi, t phi, t k phi, t k^2 phi, phi^3, t phi^3].

    The 8-column linear basis that spans the linear-decay model for every
    (k0, delta_k); bootstrap replicates re-solve contractions of its normal
    equations instead of touching rows again.
    """
    S = scale_design(phi, k)
    t = np.asarray(t, dtype=np.float64)
    return np.column_stack(
        [S[:, :3], t[:, None] * S[:, :3], S[:, 3], t * S[:, 3]]
    )


def scale_transform(betas: np.ndarray):
    """Map raw quadratic-in-k coefficients to (b, c, k0, delta_k).

    Works on one beta vector or a (batch, 4) array. Entries whose parabola
    opens the wrong way (e = -beta2 <= 0) or has a non-positive peak get nan
    in the underived fields; the two boolean masks report which.
    """
    B = np.atleast_2d(np.asarray(betas, dtype=np.float64))
    e = -B[:, 2]
    c = B[:, 3]
    degenerate = ~(e > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        k0 = np.where(degenerate, np.nan, B[:, 1] / (2.0 * e))
        b = np.where(degenerate, np.nan, B[:, 0] + e * k0 * k0)
        d2 = b / e
        bad_peak = ~degenerate & ~(d2 > 0)
        delta_k = np.where(degenerate | bad_peak, np.nan, np.sqrt(np.where(d2 > 0, d2, 1.0)))
    if np.ndim(betas) == 1:
        return (
            float(b[0]),
            float(c[0]),
            float(k0[0]),
            float(delta_k[0]),
            float(e[0]),
            bool(degenerate[0]),
            bool(bad_peak[0]),
        )
    return b, c, k0, delta_k, e, degenerate, bad_peak


@dataclass(frozen=True)
class ScaleFit:
    """Across-horizon fit in peak form: b [1 - (k-k0)^2/dk^2] phi + c phi^3."""

    b: float
    c: float
    k0: float
    delta_k: float
    e: float  # curvature -beta2; equals b / delta_k^2 when well posed
    betas: np.ndarray  # raw coefficients on [phi, k phi, k^2 phi, phi^3]
    r_squared: float
    n_obs: int
    flags: Tuple[str, ...] = ()

    @property
    def degenerate(self) -> bool:
        return "degenerate_parabola" in self.flags or "non_positive_peak" in self.flags

    def amplitude(self, k) -> np.ndarray:
        """b(k) = b [1 - (k - k0)^2 / delta_k^2]."""
        if self.degenerate:
            raise ValueError("peak parameters undefined for a degenerate fit")
        k = np.asarray(k, dtype=np.float64)
        return self.b * (1.0 - ((k - self.k0) / self.delta_k) ** 2)

    def to_dict(self) -> Dict[str, float]:
        return {
            "b": self.b,
            "c": self.c,
            "k0": self.k0,
            "delta_k": self.delta_k,
            "r_squared": self.r_squared,
        }


def fit_scale_model(y: np.ndarray, phi: np.ndarray, k: np.ndarray) -> ScaleFit:
    """Fit the across-horizon model on long-format rows (y, phi, k)."""
    y = np.asarray(y, dtype=np.float64)
    X = scale_design(phi, k)
    if y.size != X.shape[0]:
        raise ValueError("y, phi, k must have matching lengths")
    if y.size <= 4:
        raise ValueError("more parameters than observations")
    names = ["phi", "k*phi", "k^2*phi", "phi^3"]
    M, v, yy, sy, n = accumulate_normal_eq(X, y)
    betas = solve_normal_eq(M, v, names)
    r2 = r_squared_from_stats(betas, M, v, yy, sy, n)
    b, c, k0, delta_k, e, deg, bad = scale_transform(betas)
    flags = []
    if deg:
        flags.append("degenerate_parabola")
    elif bad:
        flags.append("non_positive_peak")
    return ScaleFit(b, c, k0, delta_k, e, betas, r2, n, tuple(flags))


# ---------------------------------------------------------------------------
# decay model
# ---------------------------------------------------------------------------

_DECAY_SCENARIOS = ("linear", "exponential")


@dataclass(frozen=True)
class DecayFit:
    """Scale model with time-decaying amplitudes."""

    b_bar: float
    c_bar: float
    k0: float
    delta_k: float
    q_b: float
    q_c: float
    scenario: str
    r_squared: float
    n_obs: int
    flags: Tuple[str, ...] = ()
    time_origin: Optional[float] = None

    def amplitude(self, k, t=0.0) -> np.ndarray:
        k = np.asarray(k, dtype=np.float64)
        f = 1.0 - ((k - self.k0) / self.delta_k) ** 2
        if self.scenario == "exponential":
            decay = np.exp(-self.q_b * np.asarray(t, dtype=np.float64))
        else:
            decay = 1.0 - self.q_b * np.asarray(t, dtype=np.float64)
        return self.b_bar * decay * f

    def to_dict(self) -> Dict[str, float]:
        return {
            "b_bar": self.b_bar,
            "c_bar": self.c_bar,
            "k0": self.k0,
            "delta_k": self.delta_k,
            "q_b": self.q_b,
            "q_c": self.q_c,
            "r_squared": self.r_squared,
        }


class _DecayStats:
    """Per-day sufficient statistics for the exponential-decay profile.

    Day-level stats over the 4-column basis [phi, k phi, k^2 phi, phi^3]
    plus the day's time value let any (k0, dk, q) candidate's linear
    subproblem be contracted without another pass over the rows; the
    e^{-qt} weights vary by day only.
    """

    def __init__(self, y, phi, k, t):
        y = np.asarray(y, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        X = scale_design(phi, k)
        # group rows by day (t constant within a day); rows must be day-sorted
        change = np.nonzero(np.diff(t) != 0)[0]
        if np.any(np.diff(t) < 0):
            raise ValueError("rows must be sorted by day (t nondecreasing)")
        starts = np.concatenate([[0], change + 1])
        slot = np.zeros(t.size, dtype=np.int64)
        slot[starts[1:]] = 1
        slot = np.cumsum(slot)
        n_days = starts.size
        stats = _kernels.day_stats(X, y, slot, n_days)
        self.day_t = t[starts]
        self.p = 4
        iu = np.triu_indices(4)
        G = np.zeros((n_days, 4, 4))
        G[:, iu[0], iu[1]] = stats[:, : iu[0].size]
        G = G + np.triu(G, 1).transpose(0, 2, 1)
        self.G = G  # (n_days, 4, 4) per-day XtX
        self.h = stats[:, iu[0].size : iu[0].size + 4]  # per-day Xty
        self.yy = float(stats[:, -2].sum())
        self.sum_y = float(y.sum())
        self.n = y.size

    def _aggregate(self, w: np.ndarray):
        # sum_d w_d G_d and sum_d w_d h_d
        return np.tensordot(w, self.G, axes=1), w @ self.h


def _contracted_solve(M: np.ndarray, v: np.ndarray, yy: float):
    """Guarded solve of a small contracted system; None when ill-conditioned."""
    d = np.sqrt(np.diag(M))
    if not np.all(np.isfinite(d)) or not np.all(d > 0):
        return None
    Ms = M / np.outer(d, d)
    try:
        gam = np.linalg.solve(Ms, v / d) / d
    except np.linalg.LinAlgError:
        return None
    cond = np.linalg.cond(Ms)
    if not np.isfinite(cond) or cond > 1e14:
        return None
    ssr = max(yy - 2.0 * float(gam @ v) + float(gam @ M @ gam), 0.0)
    return gam, ssr


def _parabola_coeffs(k0: float, dk: float) -> np.ndarray:
    # f(k) = 1 - (k - k0)^2/dk^2 expressed on the monomials [1, k, k^2]
    return np.array([1.0 - (k0 * k0) / (dk * dk), 2.0 * k0 / (dk * dk), -1.0 / (dk * dk)])


def decay_linear_from_stats(M8: np.ndarray, v8: np.ndarray, yy: float, k0: float, dk: float):
    """Amplitudes and SSR of the linear-decay model at fixed (k0, delta_k).

    M8/v8 are the normal equations of decay_design's 8-column basis. The
    four amplitudes multiply [f phi, t f phi, phi^3, t phi^3]. Returns
    (gammas, ssr) or None when the contracted system is ill-conditioned.
    """
    alpha = _parabola_coeffs(k0, dk)
    C = np.zeros((8, 4))
    C[0:3, 0] = alpha
    C[3:6, 1] = alpha
    C[6, 2] = 1.0
    C[7, 3] = 1.0
    return _contracted_solve(C.T @ M8 @ C, C.T @ v8, yy)


def polish_decay_linear(
    M8: np.ndarray, v8: np.ndarray, yy: float, k0: float, dk: float
):
    """Nelder-Mead refinement of (k0, delta_k) from a warm start.

    Returns (k0, dk, gammas, ssr); used on bootstrap replicates, which start
    at the point estimate instead of re-running the profile grid.
    """
    start = decay_linear_from_stats(M8, v8, yy, k0, dk)
    if start is None:
        raise ValueError("decay profile singular at the starting point")
    ssr0 = start[1]

    def objective(x):
        out = decay_linear_from_stats(M8, v8, yy, x[0], math.exp(x[1]))
        return out[1] if out is not None else np.inf

    res = minimize(
        objective,
        np.array([k0, math.log(dk)]),
        method="Nelder-Mead",
        options={
            "xatol": 1e-9,
            "fatol": 1e-14 * max(ssr0, 1e-300),
            "maxiter": 2000,
            "maxfev": 4000,
        },
    )
    if res.fun <= ssr0:
        k0, dk = float(res.x[0]), float(math.exp(res.x[1]))
    out = decay_linear_from_stats(M8, v8, yy, k0, dk)
    if out is None:
        raise ValueError("decay profile singular after polish")
    return k0, dk, out[0], out[1]


def _exp_profile_gammas(stats: "_DecayStats", k0: float, dk: float, q: float):
    """Exponential-scenario amplitude subproblem at fixed (k0, dk, q).

    Regressors: [e^{-qt} f phi, phi^3, t phi^3]; b decays exponentially at
    rate q while c keeps the linear profile.
    """
    alpha = _parabola_coeffs(k0, dk)
    t = stats.day_t
    w_e = np.exp(-q * t)
    aggs = {
        "ee": stats._aggregate(w_e * w_e),
        "e": stats._aggregate(w_e),
        "et": stats._aggregate(w_e * t),
        "1": stats._aggregate(np.ones_like(t)),
        "t": stats._aggregate(t),
        "tt": stats._aggregate(t * t),
    }
    c_vec = np.zeros(4)
    c_vec[:3] = alpha
    e3 = np.array([0.0, 0.0, 0.0, 1.0])
    M = np.empty((3, 3))
    v = np.empty(3)
    M[0, 0] = c_vec @ aggs["ee"][0] @ c_vec
    M[0, 1] = M[1, 0] = c_vec @ aggs["e"][0] @ e3
    M[0, 2] = M[2, 0] = c_vec @ aggs["et"][0] @ e3
    M[1, 1] = e3 @ aggs["1"][0] @ e3
    M[1, 2] = M[2, 1] = e3 @ aggs["t"][0] @ e3
    M[2, 2] = e3 @ aggs["tt"][0] @ e3
    v[0] = c_vec @ aggs["ee"][1]
    v[1] = e3 @ aggs["1"][1]
    v[2] = e3 @ aggs["t"][1]
    return _contracted_solve(M, v, stats.yy)


def decay_params_from_gammas(gammas: np.ndarray, scenario: str, q: Optional[float] = None):
    """(b_bar, c_bar, q_b, q_c, flags) from profile-stage amplitudes."""
    flags = []
    if scenario == "linear":
        b_bar, qb_amp, c_bar, qc_amp = gammas
        if abs(b_bar) > 0:
            q_b = -qb_amp / b_bar
        else:
            q_b, flags = float("nan"), flags + ["decay_rate_unidentified"]
    else:
        b_bar, c_bar, qc_amp = gammas
        q_b = float(q)
    if abs(c_bar) > 0:
        q_c = -qc_amp / c_bar
    else:
        q_c, flags = float("nan"), flags + ["decay_rate_unidentified"]
    return float(b_bar), float(c_bar), float(q_b), float(q_c), flags


def fit_decay_model(
    y: np.ndarray,
    phi: np.ndarray,
    k: np.ndarray,
    t_years: np.ndarray,
    scenario: str = "linear",
    k0_grid: Optional[np.ndarray] = None,
    delta_k_grid: Optional[np.ndarray] = None,
    q_grid: Optional[np.ndarray] = None,
    force_zero_decay: bool = False,
    time_origin: Optional[float] = None,
) -> DecayFit:
    """Fit time-decaying amplitudes on long-format rows.

    ``t_years`` is each row's time in years relative to the caller's origin
    (conventionally the sample midpoint, so the amplitudes are mid-sample
    values). Rows must be day-sorted. With ``force_zero_decay`` the decay
    rates are pinned at zero, which reduces exactly to the scale model.
    """
    if scenario not in _DECAY_SCENARIOS:
        raise ValueError(f"scenario must be one of {_DECAY_SCENARIOS}")
    if force_zero_decay:
        sf = fit_scale_model(y, phi, k)
        return DecayFit(
            sf.b, sf.c, sf.k0, sf.delta_k, 0.0, 0.0, scenario, sf.r_squared,
            sf.n_obs, sf.flags + ("decay_fixed_zero",), time_origin,
        )

    if k0_grid is None:
        k0_grid = np.arange(1.0, 10.5, 0.5)
    if delta_k_grid is None:
        delta_k_grid = np.arange(1.0, 10.5, 0.5)
    if q_grid is None:
        q_grid = np.arange(-0.05, 0.2501, 0.025)

    if scenario == "linear":
        X = decay_design(phi, k, t_years)
        y = np.asarray(y, dtype=np.float64)
        M8, v8, yy, sum_y, n = accumulate_normal_eq(X, y)
        best = None
        for k0 in k0_grid:
            for dk in delta_k_grid:
                out = decay_linear_from_stats(M8, v8, yy, float(k0), float(dk))
                if out is not None and (best is None or out[1] < best[2]):
                    best = (float(k0), float(dk), out[1])
        if best is None:
            raise ValueError("decay-model profile is singular everywhere on the grid")
        k0, dk, gam, ssr = polish_decay_linear(M8, v8, yy, best[0], best[1])
        q = None
    else:
        stats = _DecayStats(y, phi, k, t_years)
        yy, sum_y, n = stats.yy, stats.sum_y, stats.n
        best = None
        for q0 in q_grid:
            for k0 in k0_grid:
                for dk in delta_k_grid:
                    out = _exp_profile_gammas(stats, float(k0), float(dk), float(q0))
                    if out is not None and (best is None or out[1] < best[3]):
                        best = (float(k0), float(dk), float(q0), out[1])
        if best is None:
            raise ValueError("decay-model profile is singular everywhere on the grid")

        def objective(x):
            out = _exp_profile_gammas(stats, x[0], math.exp(x[1]), x[2])
            return out[1] if out is not None else np.inf

        res = minimize(
            objective,
            np.array([best[0], math.log(best[1]), best[2]]),
            method="Nelder-Mead",
            options={
                "xatol": 1e-9,
                "fatol": 1e-14 * max(best[3], 1e-300),
                "maxiter": 4000,
                "maxfev": 8000,
            },
        )
        if res.fun <= best[3]:
            k0, dk, q = float(res.x[0]), float(math.exp(res.x[1])), float(res.x[2])
        else:
            k0, dk, q = best[0], best[1], best[2]
        out = _exp_profile_gammas(stats, k0, dk, q)
        if out is None:
            raise ValueError("decay profile singular after polish")
        gam, ssr = out

    b_bar, c_bar, q_b, q_c, flags = decay_params_from_gammas(gam, scenario, q)
    sst = yy - sum_y ** 2 / n
    r2 = 1.0 - ssr / sst if sst > 0 else float("nan")
    if b_bar <= 0:
        flags.append("non_positive_peak")
    return DecayFit(
        b_bar, c_bar, k0, dk, q_b, q_c, scenario, r2, n, tuple(flags), time_origin
    )


# ---------------------------------------------------------------------------
# derived quantities
# ---------------------------------------------------------------------------


def critical_strength(b: float, c: float) -> Optional[float]:
    """Trend level where reversion overtakes continuation: sqrt(-b/c).

    Defined only when the linear term pushes one way and the cubic the
    other (b c < 0); returns None otherwise.
    """
    if not (np.isfinite(b) and np.isfinite(c)) or b * c >= 0:
        return None
    return math.sqrt(-b / c)


@dataclass(frozen=True)
class BoundaryCurve:
    """Zero-expected-return boundary in the (k, phi) plane."""

    k: np.ndarray
    phi_c: np.ndarray
    k0: float
    delta_k: float
    phi_peak: float  # critical strength at k = k0


def ellipse_boundary(
    b: float,
    c: float,
    k0: float,
    delta_k: float,
    k_values: Optional[np.ndarray] = None,
) -> BoundaryCurve:
    """phi_c(k) = sqrt(-b(k)/c) with b(k) the peak-form amplitude.

    Needs b > 0 > c. The curve is real inside |k - k0| < delta_k and has
    semi-axes delta_k (horizontal) and sqrt(-b/c) (vertical).
    """
    if not (b > 0 and c < 0):
        raise ValueError("boundary needs b > 0 and c < 0")
    if k_values is None:
        k_values = np.linspace(k0 - delta_k, k0 + delta_k, 201)
    k_values = np.asarray(k_values, dtype=np.float64)
    amp = b * (1.0 - ((k_values - k0) / delta_k) ** 2)
    # zero amplitude is the curve touching phi = 0; only outside is undefined
    with np.errstate(invalid="ignore"):
        phi_c = np.sqrt(np.where(amp >= 0, -amp / c, np.nan))
    return BoundaryCurve(k_values, phi_c, k0, delta_k, math.sqrt(-b / c))


def aggregate_weights(
    scale_ks: Sequence[int],
    weighting: str = "equal",
    fit: Optional[ScaleFit] = None,
) -> np.ndarray:
    """Horizon weights for the aggregated factor, normalized to sum 1.

    "equal" weights every horizon the same; "parabolic" weights each by its
    fitted amplitude b(k) floored at zero, so horizons the model considers
    anti-predictive drop out.
    """
    ks = np.asarray(scale_ks, dtype=np.float64)
    if weighting == "equal":
        w = np.ones(ks.size)
    elif weighting == "parabolic":
        if fit is None:
            raise ValueError("parabolic weighting needs a scale-model fit")
        w = np.maximum(fit.amplitude(ks), 0.0)
        if not w.sum() > 0:
            raise ValueError("all horizon amplitudes are non-positive")
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    return w / w.sum()


def predict(fit, phi, k=None, t=None, alpha=None):
    """Model prediction for trend strength(s) phi.

    ScaleFit needs k; DecayFit needs k and t (years from its origin).
    ``alpha`` adds a per-row intercept on top (e.g. market-specific).
    """
    phi = np.asarray(phi, dtype=np.float64)
    if isinstance(fit, CubicFit):
        out = np.zeros_like(phi)
        for p, coef in zip(fit.powers, fit.coefficients):
            out = out + coef * phi ** p
    elif isinstance(fit, ScaleFit):
        if k is None:
            raise ValueError("scale-model prediction needs k")
        k = np.asarray(k, dtype=np.float64)
        X = scale_design(phi, k)
        out = X @ fit.betas
    elif isinstance(fit, DecayFit):
        if k is None or t is None:
            raise ValueError("decay-model prediction needs k and t")
        t = np.asarray(t, dtype=np.float64)
        amp = fit.amplitude(k, t)
        # c decays linearly in both scenarios; only b's profile changes shape
        c_t = fit.c_bar * (1.0 - fit.q_c * t)
        out = amp * phi + c_t * phi ** 3
    else:
        raise TypeError(f"unsupported fit type {type(fit).__name__}")
    if alpha is not None:
        out = out + np.asarray(alpha, dtype=np.float64)
    return out
