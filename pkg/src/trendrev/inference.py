"""Uncertainty and out-of-sample machinery.

* Day-block bootstrap: every replicate resamples whole calendar days with
  replacement, so all markets and scales of a sampled day move together and
  cross-sectional dependence survives. Replicates are refit from shared
  per-day sufficient statistics; trend strengths are never recomputed along
  resampled sequences. Parameter errors are half the (84th - 16th)
  percentile spread of the replicate distribution, t-stats are point
  estimate over error.
* Contiguous k-fold cross-validation: folds are consecutive day blocks;
  each fold's model, premia, and (by default) volatilities come only from
  the other folds' days, and signals are rebuilt per fold under those
  training-only statistics. The score is the squared correlation between
  pooled out-of-sample predictions and realized returns.
* Effective market dimension, parameter budgeting, per-group subset scans,
  and the cap/premium sensitivity sweep.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import _kernels, models
from .market_data import ReturnPanel, SignalDatabase
from .trend import TrendSpec, build_signal_database, default_specs

__all__ = [
    "ModelSpec",
    "BootstrapResult",
    "bootstrap",
    "CvResult",
    "cross_validate",
    "EffectiveDimension",
    "effective_dimension",
    "DofBudget",
    "dof_budget",
    "SubsetResult",
    "subset_analysis",
    "sensitivity_sweep",
    "derive_seed",
]

MODEL_KINDS = ("cubic", "scale", "decay")


def derive_seed(master: int, component: str, index: int = 0) -> int:
    """Stable sub-seed for a named component of a larger seeded run."""
    digest = hashlib.sha256(f"{component}:{index}".encode()).digest()
    salt = int.from_bytes(digest[:8], "little")
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, salt])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ModelSpec:
    """Which model to fit on a signal database, and on which rows.

    Row selection: by default every (day, market) row is read at every scale
    in ``scales`` (all of them if None), matching the pooled regressions.
    ``market_scales`` instead reads each market at one designated horizon.
    ``aggregate`` (cubic only) replaces per-scale strengths by their
    weighted average ("equal" or "parabolic" amplitude weights).

    For the decay kinds, ``time_origin`` is the day index mapped to t = 0
    (default: midpoint of the rows' day range) and t is measured in years
    of ``days_per_year`` days.
    """

    kind: str = "scale"
    powers: Tuple[int, ...] = (0, 1, 3)
    scales: Optional[Tuple[int, ...]] = None
    market_scales: Optional[Mapping[str, int]] = None
    aggregate: Optional[str] = None
    scenario: str = "linear"
    force_zero_decay: bool = False
    time_origin: Optional[float] = None
    days_per_year: float = 261.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"model kind must be one of {MODEL_KINDS}")
        if self.aggregate is not None:
            if self.kind != "cubic":
                raise ValueError("aggregate factors feed the cubic model only")
            if self.aggregate not in ("equal", "parabolic"):
                raise ValueError("aggregate must be 'equal' or 'parabolic'")
            if self.market_scales is not None:
                raise ValueError("aggregate and market_scales are exclusive")
        if self.scenario not in ("linear", "exponential"):
            raise ValueError("scenario must be 'linear' or 'exponential'")
        if not self.days_per_year > 0:
            raise ValueError("days_per_year must be positive")


def _aggregate_weights_for(db: SignalDatabase, spec: ModelSpec) -> np.ndarray:
    """Full-width column weights for the aggregated factor, zero off-scope."""
    ks = spec.scales if spec.scales is not None else db.scale_ks
    cols = [db.scale_column(k) for k in ks]
    if spec.aggregate == "parabolic":
        y, phi, karr, _ = db.expand(ks)
        sfit = models.fit_scale_model(y, phi, karr)
        w = models.aggregate_weights(ks, "parabolic", sfit)
    else:
        w = models.aggregate_weights(ks, "equal")
    w_full = np.zeros(db.n_scales)
    w_full[cols] = w
    return w_full


def _model_rows(db: SignalDatabase, spec: ModelSpec, agg_w: Optional[np.ndarray] = None):
    """(y, phi, k, day, t) rows for the spec; k/t are None where unused."""
    if db.n_rows == 0:
        raise ValueError("empty signal database")
    if spec.aggregate is not None:
        w = agg_w if agg_w is not None else _aggregate_weights_for(db, spec)
        phi = db.aggregate_series(w)
        y, k, day = db.returns, None, db.days
    elif spec.market_scales is not None:
        y, phi, k, day = db.per_market_scale(dict(spec.market_scales))
    else:
        y, phi, k, day = db.expand(spec.scales)
    t = None
    if spec.kind == "decay":
        origin = spec.time_origin
        if origin is None:
            origin = (float(db.days.min()) + float(db.days.max())) / 2.0
        t = (day - origin) / spec.days_per_year
    return y, phi, k, day, t


def _point_fit(spec: ModelSpec, y, phi, k, t):
    if spec.kind == "cubic":
        return models.fit_cubic(y, phi, spec.powers)
    if spec.kind == "scale":
        return models.fit_scale_model(y, phi, k)
    return models.fit_decay_model(
        y, phi, k, t, scenario=spec.scenario, force_zero_decay=spec.force_zero_decay
    )


def _design_matrix(spec: ModelSpec, phi, k, t):
    if spec.kind == "cubic":
        powers = tuple(sorted(set(spec.powers)))
        X = np.column_stack([phi ** p for p in powers])
        names = tuple(models.POWER_COEFF_NAMES[p] for p in powers)
        return X, names
    if spec.kind == "scale":
        return models.scale_design(phi, k), models.SCALE_PARAM_NAMES
    return models.decay_design(phi, k, t), models.DECAY_PARAM_NAMES


def _point_params(fit, spec: ModelSpec) -> Dict[str, float]:
    if spec.kind == "cubic":
        return {n: float(c) for n, c in zip(fit.param_names, fit.coefficients)}
    if spec.kind == "scale":
        return {"b": fit.b, "c": fit.c, "k0": fit.k0, "delta_k": fit.delta_k}
    return {
        "b_bar": fit.b_bar,
        "c_bar": fit.c_bar,
        "k0": fit.k0,
        "delta_k": fit.delta_k,
        "q_b": fit.q_b,
        "q_c": fit.q_c,
    }


def _batched_scaled_solve(Ms: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Solve a batch of small normal equations; nan rows where singular."""
    d = np.sqrt(np.einsum("bii->bi", Ms))
    ok = np.all(np.isfinite(d) & (d > 0), axis=1)
    d_safe = np.where((d > 0) & np.isfinite(d), d, 1.0)
    Msc = Ms / (d_safe[:, :, None] * d_safe[:, None, :])
    vsc = vs / d_safe
    betas = np.full_like(vs, np.nan)
    idx = np.flatnonzero(ok)
    if idx.size:
        w = np.linalg.eigvalsh(Msc[idx])
        good = idx[w[:, 0] > 1e-12 * w[:, -1]]
        if good.size:
            # 2-D b would be read as one matrix, not a stack of vectors
            sol = np.linalg.solve(Msc[good], vsc[good][..., None])[..., 0]
            betas[good] = sol / d_safe[good]
    return betas


@dataclass
class BootstrapResult:
    """Day-block bootstrap of one model on one database."""

    spec: ModelSpec
    fit: object
    names: Tuple[str, ...]
    point: Dict[str, float]
    error: Dict[str, float]
    t_stat: Dict[str, float]
    draws: Dict[str, np.ndarray]  # length n_samples; nan rows were excluded
    n_samples: int
    seed: int
    n_excluded: int
    flags: Tuple[str, ...] = ()

    @property
    def excluded_fraction(self) -> float:
        return self.n_excluded / self.n_samples

    @property
    def valid(self) -> bool:
        return "too_many_excluded" not in self.flags

    def percentiles(self, name: str, q) -> np.ndarray:
        d = self.draws[name]
        return np.percentile(d[np.isfinite(d)], q)

    def to_dict(self) -> Dict[str, object]:
        return {
            "model": self.spec.kind,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "n_excluded": self.n_excluded,
            "point": dict(self.point),
            "error": dict(self.error),
            "t_stat": dict(self.t_stat),
            "r_squared": float(getattr(self.fit, "r_squared", float("nan"))),
            "flags": list(self.flags),
        }


def _replicate_draws(seed: int, rep: int, n_days: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(rep)]))
    return rng.integers(0, n_days, size=n_days, dtype=np.int64)


def bootstrap(
    db: SignalDatabase,
    spec: Optional[ModelSpec] = None,
    n_samples: int = 5000,
    seed: int = 0,
    chunk_size: int = 512,
) -> BootstrapResult:
    """Resample whole days with replacement and refit per replicate.

    Replicate r's day draws come from the stream SeedSequence([seed, r]),
    so results are independent of chunking and any parallel split. A
    replicate whose refit is degenerate (singular system, wrong-way
    parabola) is excluded from the percentiles; more than 1% exclusions
    flags the whole result as invalid.
    """
    spec = spec if spec is not None else ModelSpec()
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if spec.kind == "decay":
        if spec.scenario != "linear":
            raise ValueError(
                "bootstrap supports the linear decay scenario only; "
                "fit the exponential scenario directly"
            )
        if spec.force_zero_decay:
            raise ValueError("zero-decay bootstrap is the scale model; use kind='scale'")

    y, phi, k, day, t = _model_rows(db, spec)
    fit = _point_fit(spec, y, phi, k, t)
    X, names = _design_matrix(spec, phi, k, t)

    uniq_days, slot = np.unique(day, return_inverse=True)
    n_days = uniq_days.size
    stats = _kernels.day_stats(X, y, slot.astype(np.int64), n_days)

    p = X.shape[1]
    iu, ju = np.triu_indices(p)
    n_xx = iu.size
    draws: Dict[str, np.ndarray] = {n: np.full(n_samples, np.nan) for n in names}

    for start in range(0, n_samples, chunk_size):
        stop = min(n_samples, start + chunk_size)
        m = stop - start
        idx = np.empty((m, n_days), dtype=np.int64)
        for r in range(start, stop):
            idx[r - start] = _replicate_draws(seed, r, n_days)
        acc = _kernels.bootstrap_accumulate(stats, idx)
        Ms = np.zeros((m, p, p))
        Ms[:, iu, ju] = acc[:, :n_xx]
        Ms = Ms + np.triu(Ms, 1).transpose(0, 2, 1)
        vs = acc[:, n_xx : n_xx + p]
        if spec.kind == "decay":
            yy_rep = acc[:, n_xx + p]
            for j in range(m):
                try:
                    k0j, dkj, gam, _ = models.polish_decay_linear(
                        Ms[j], vs[j], float(yy_rep[j]), fit.k0, fit.delta_k
                    )
                except (ValueError, np.linalg.LinAlgError):
                    continue
                b_bar, c_bar, q_b, q_c, fl = models.decay_params_from_gammas(gam, "linear")
                if fl:
                    continue
                draws["b_bar"][start + j] = b_bar
                draws["c_bar"][start + j] = c_bar
                draws["k0"][start + j] = k0j
                draws["delta_k"][start + j] = dkj
                draws["q_b"][start + j] = q_b
                draws["q_c"][start + j] = q_c
        else:
            betas = _batched_scaled_solve(Ms, vs)
            if spec.kind == "cubic":
                for jname, name in enumerate(names):
                    draws[name][start:stop] = betas[:, jname]
            else:
                b, c, k0, delta_k, _, deg, bad = models.scale_transform(betas)
                invalid = deg | bad
                b = np.where(invalid, np.nan, b)
                c = np.where(invalid, np.nan, c)
                k0 = np.where(invalid, np.nan, k0)
                delta_k = np.where(invalid, np.nan, delta_k)
                draws["b"][start:stop] = b
                draws["c"][start:stop] = c
                draws["k0"][start:stop] = k0
                draws["delta_k"][start:stop] = delta_k

    all_draws = np.column_stack([draws[n] for n in names])
    valid = np.all(np.isfinite(all_draws), axis=1)
    n_excluded = int(n_samples - valid.sum())
    for n in names:  # excluded replicates drop out of every parameter
        draws[n] = np.where(valid, draws[n], np.nan)

    flags = list(getattr(fit, "flags", ()))
    if n_excluded > 0.01 * n_samples:
        flags.append("too_many_excluded")

    point = _point_params(fit, spec)
    error: Dict[str, float] = {}
    t_stat: Dict[str, float] = {}
    for n in names:
        d = draws[n][valid]
        if d.size == 0:
            error[n] = float("nan")
            t_stat[n] = float("nan")
            continue
        lo, hi = np.percentile(d, [16.0, 84.0])
        err = 0.5 * (hi - lo)
        error[n] = float(err)
        pt = point[n]
        if err > 0 and np.isfinite(pt):
            t_stat[n] = float(pt / err)
        elif err == 0 and pt == 0:
            t_stat[n] = 0.0
        elif np.isfinite(pt):
            t_stat[n] = math.inf if pt > 0 else -math.inf
        else:
            t_stat[n] = float("nan")
    return BootstrapResult(
        spec=spec,
        fit=fit,
        names=names,
        point=point,
        error=error,
        t_stat=t_stat,
        draws=draws,
        n_samples=n_samples,
        seed=seed,
        n_excluded=n_excluded,
        flags=tuple(flags),
    )


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------


@dataclass
class CvResult:
    """Pooled out-of-sample score of one model under contiguous folds.

    fold_day_ranges holds each validation block's first and last panel day
    index (inclusive); fold_mu / fold_sigma are the training-only
    normalization constants actually used for that fold, kept so leakage
    checks can recompute them from the raw panel.
    """

    n_folds: int
    fold_day_ranges: Tuple[Tuple[int, int], ...]
    fold_sizes: Tuple[int, ...]
    r_squared_adj: float
    predicted: np.ndarray
    actual: np.ndarray
    day: np.ndarray
    fold_mu: np.ndarray
    fold_sigma: np.ndarray
    fits: Tuple[object, ...]
    sigma_training_only: bool

    @property
    def n_predictions(self) -> int:
        return int(self.predicted.size)

    def to_dict(self) -> Dict[str, object]:
        return {
            "n_folds": self.n_folds,
            "fold_sizes": list(self.fold_sizes),
            "fold_day_ranges": [list(r) for r in self.fold_day_ranges],
            "r_squared_adj": float(self.r_squared_adj),
            "n_predictions": self.n_predictions,
        }


def _fold_slices(n: int, n_folds: int) -> List[Tuple[int, int]]:
    """Contiguous fold boundaries; the remainder goes to the final folds."""
    base, rem = divmod(n, n_folds)
    if base < 2:
        raise ValueError("every fold needs at least 2 days")
    sizes = [base] * (n_folds - rem) + [base + 1] * rem
    out, pos = [], 0
    for s in sizes:
        out.append((pos, pos + s))
        pos += s
    return out


def cross_validate(
    panel: ReturnPanel,
    spec: Optional[ModelSpec] = None,
    n_folds: int = 15,
    trend_specs: Optional[Sequence[TrendSpec]] = None,
    burn_in: int = 522,
    premium_fraction: float = 0.0,
    sigma_training_only: bool = True,
) -> CvResult:
    """Out-of-sample R^2_adj under contiguous day folds.

    For each fold, mu (and sigma unless ``sigma_training_only=False``, which
    freezes the panel's own sigma) are re-estimated on the training days
    only, the signal database is rebuilt under those constants over the
    full span, and the model refit on training rows predicts the fold's
    rows. The returned score is corr(predicted, actual)^2 pooled over all
    validation rows.
    """
    spec = spec if spec is not None else ModelSpec()
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    D, M = panel.n_days, panel.n_markets
    emitted = np.arange(burn_in, D, dtype=np.int64)
    slices = _fold_slices(emitted.size, n_folds)

    if spec.kind == "decay" and spec.time_origin is None:
        # one shared clock across folds
        origin = (float(emitted.min()) + float(emitted.max())) / 2.0
        spec = replace(spec, time_origin=origin)

    preds: List[np.ndarray] = []
    actuals: List[np.ndarray] = []
    days_out: List[np.ndarray] = []
    ranges: List[Tuple[int, int]] = []
    fits: List[object] = []
    fold_mu = np.empty((n_folds, M))
    fold_sigma = np.empty((n_folds, M))

    for f, (a, b) in enumerate(slices):
        val_days = emitted[a:b]
        val_mask = np.zeros(D, dtype=bool)
        val_mask[val_days] = True
        train_mask = np.zeros(D, dtype=bool)
        train_mask[emitted] = True
        train_mask[val_days] = False
        assert not np.any(train_mask & val_mask)

        train_raw = panel.raw[train_mask]
        mu_f = train_raw.mean(axis=0)
        sigma_f = train_raw.std(axis=0) if sigma_training_only else np.asarray(panel.sigma)
        if np.any(~(sigma_f > 0)):
            bad = panel.markets[int(np.flatnonzero(~(sigma_f > 0))[0])]
            raise ValueError(f"market {bad!r} has zero training-window variance")
        fold_mu[f] = mu_f
        fold_sigma[f] = sigma_f

        normalized = panel.raw / sigma_f
        excess = normalized - mu_f / sigma_f
        fold_panel = ReturnPanel(
            markets=panel.markets,
            dates=panel.dates,
            raw=panel.raw,
            normalized=normalized,
            excess=excess,
            mu=mu_f,
            sigma=sigma_f,
            estimation_mask=train_mask,
        )
        db_f = build_signal_database(
            fold_panel, trend_specs, burn_in=burn_in, premium_fraction=premium_fraction
        )
        tr = db_f.select(days=train_mask)
        va = db_f.select(days=val_mask)
        assert np.intersect1d(tr.unique_days(), va.unique_days()).size == 0
        assert tr.n_rows + va.n_rows == db_f.n_rows

        agg_w = _aggregate_weights_for(tr, spec) if spec.aggregate is not None else None
        y_tr, phi_tr, k_tr, _, t_tr = _model_rows(tr, spec, agg_w)
        fit = _point_fit(spec, y_tr, phi_tr, k_tr, t_tr)
        y_va, phi_va, k_va, day_va, t_va = _model_rows(va, spec, agg_w)
        pred = models.predict(fit, phi_va, k=k_va, t=t_va)

        preds.append(pred)
        actuals.append(y_va)
        days_out.append(day_va)
        ranges.append((int(val_days[0]), int(val_days[-1])))
        fits.append(fit)

    predicted = np.concatenate(preds)
    actual = np.concatenate(actuals)
    day_all = np.concatenate(days_out)
    vp, va_ = predicted.var(), actual.var()
    if vp > 0 and va_ > 0:
        cov = np.mean((predicted - predicted.mean()) * (actual - actual.mean()))
        r2_adj = float(cov * cov / (vp * va_))
    else:
        r2_adj = 0.0
    return CvResult(
        n_folds=n_folds,
        fold_day_ranges=tuple(ranges),
        fold_sizes=tuple(b - a for a, b in slices),
        r_squared_adj=r2_adj,
        predicted=predicted,
        actual=actual,
        day=day_all,
        fold_mu=fold_mu,
        fold_sigma=fold_sigma,
        fits=tuple(fits),
        sigma_training_only=sigma_training_only,
    )


# ---------------------------------------------------------------------------
# dimension and parameter budget
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EffectiveDimension:
    """How many independent markets a correlated panel is worth."""

    n_m: float
    eigenvalue_fractions: np.ndarray  # cumulative spectrum shares, length M

    def components_for(self, coverage: float) -> int:
        """Smallest number of principal components explaining ``coverage``."""
        return int(np.searchsorted(self.eigenvalue_fractions, coverage) + 1)


def effective_dimension(panel: ReturnPanel) -> EffectiveDimension:
    """n_m = 1 / Var(equal-weight portfolio of unit-variance returns).

    Computed over the panel's estimation window, where normalized returns
    have unit variance by construction. Also reports the cumulative variance
    fractions of the correlation spectrum as a secondary view.
    """
    if panel.n_markets < 2:
        raise ValueError("effective dimension needs at least 2 markets")
    R = panel.normalized[panel.estimation_mask]
    port = R.mean(axis=1)
    v = float(port.var())
    if not v > 0:
        raise ValueError("degenerate covariance: equal-weight portfolio has no variance")
    corr = np.corrcoef(R, rowvar=False)
    if not np.all(np.isfinite(corr)):
        raise ValueError("degenerate covariance: constant market in window")
    eig = np.linalg.eigvalsh(corr)[::-1]
    frac = np.cumsum(eig) / eig.sum()
    return EffectiveDimension(n_m=1.0 / v, eigenvalue_fractions=frac)


@dataclass(frozen=True)
class DofBudget:
    """How many parameters a target signal strength can support."""

    n_m: float
    years: float
    target_r2: float
    erosion_fraction: float
    n_data: float
    daily_sharpe: float
    max_params: int


def dof_budget(
    n_m: float, years: float, target_r2: float, erosion_fraction: float = 0.2
) -> DofBudget:
    """Parameter budget from the in-sample bias rule R^2_adj ~ R^2 - k/N.

    N = 260 n_m years data points. With ``target_r2`` the adjusted (honest)
    level and ``erosion_fraction`` the tolerated in-sample share lost to
    fitting, k/N = erosion * R^2 and R^2 = target / (1 - erosion), so
    max k = floor(N * target_r2 * erosion / (1 - erosion)).
    """
    if n_m <= 0 or years <= 0 or target_r2 < 0:
        raise ValueError("n_m, years must be positive and target_r2 >= 0")
    if not 0.0 <= erosion_fraction < 1.0:
        raise ValueError("erosion_fraction must lie in [0, 1)")
    n_data = 260.0 * n_m * years
    k = math.floor(n_data * target_r2 * erosion_fraction / (1.0 - erosion_fraction))
    return DofBudget(
        n_m=float(n_m),
        years=float(years),
        target_r2=float(target_r2),
        erosion_fraction=float(erosion_fraction),
        n_data=n_data,
        daily_sharpe=math.sqrt(target_r2),
        max_params=int(k),
    )


# ---------------------------------------------------------------------------
# subsets and sweeps
# ---------------------------------------------------------------------------

GROUPINGS = ("by_asset_class", "by_period_thirds")


@dataclass
class SubsetResult:
    """Per-group parameter quantiles relative to the whole-sample point fit."""

    grouping: str
    overall: Dict[str, float]
    ratio_quantiles: Dict[str, Dict[str, Tuple[float, float, float]]]
    bootstraps: Dict[str, BootstrapResult]

    def to_dict(self) -> Dict[str, object]:
        return {
            "grouping": self.grouping,
            "overall": dict(self.overall),
            "ratio_quantiles": {
                g: {p: list(q) for p, q in params.items()}
                for g, params in self.ratio_quantiles.items()
            },
        }


def _period_groups(db: SignalDatabase, n_periods: int) -> Dict[str, np.ndarray]:
    days = db.unique_days()
    slices = _fold_slices(days.size, n_periods)
    return {
        f"period_{i + 1}": days[a:b] for i, (a, b) in enumerate(slices)
    }


def subset_analysis(
    db: SignalDatabase,
    grouping: str,
    spec: Optional[ModelSpec] = None,
    asset_classes: Optional[Mapping[str, str]] = None,
    n_samples: int = 5000,
    seed: int = 0,
    n_periods: int = 3,
) -> SubsetResult:
    """Bootstrap each subset and report its 16/50/84 percentiles as
    multiples of the whole-sample point estimate.

    "by_asset_class" groups markets via the supplied market -> class map;
    "by_period_thirds" cuts the day range into ``n_periods`` contiguous
    blocks (remainder days to the final blocks).
    """
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}")
    spec = spec if spec is not None else ModelSpec()

    y, phi, k, _, t = _model_rows(db, spec)
    overall = _point_params(_point_fit(spec, y, phi, k, t), spec)

    if grouping == "by_asset_class":
        if not asset_classes:
            raise ValueError("by_asset_class needs a market -> class mapping")
        missing = set(db.markets) - set(asset_classes)
        if missing:
            raise ValueError(f"asset class missing for markets: {sorted(missing)}")
        classes = sorted(set(asset_classes[m] for m in db.markets))
        groups = {
            cls: db.select(markets=[m for m in db.markets if asset_classes[m] == cls])
            for cls in classes
        }
    else:
        groups = {
            name: db.select(days=days) for name, days in _period_groups(db, n_periods).items()
        }

    ratio_q: Dict[str, Dict[str, Tuple[float, float, float]]] = {}
    boots: Dict[str, BootstrapResult] = {}
    for name, sub in groups.items():
        if sub.n_rows == 0:
            raise ValueError(f"group {name!r} is empty")
        bs = bootstrap(sub, spec, n_samples=n_samples, seed=derive_seed(seed, f"subset:{name}"))
        boots[name] = bs
        ratios: Dict[str, Tuple[float, float, float]] = {}
        for pname in bs.names:
            q16, q50, q84 = bs.percentiles(pname, [16.0, 50.0, 84.0])
            ref = overall[pname]
            ratios[pname] = (float(q16 / ref), float(q50 / ref), float(q84 / ref))
        ratio_q[name] = ratios
    return SubsetResult(
        grouping=grouping, overall=overall, ratio_quantiles=ratio_q, bootstraps=boots
    )


def sensitivity_sweep(
    panel: ReturnPanel,
    caps: Sequence[float],
    premium_fractions: Sequence[float],
    spec: Optional[ModelSpec] = None,
    burn_in: int = 522,
    n_samples: int = 5000,
    n_folds: int = 15,
    seed: int = 0,
) -> List[Dict[str, float]]:
    """Refit the whole pipeline on a (cap x premium fraction) grid.

    Each cell rebuilds signals with that cap on every horizon and with the
    trend input R - (1 - f) mu/sigma, then reports the scale-model point
    fit, bootstrap t-stats, and out-of-sample R^2_adj for both the
    per-scale model and the parabolic aggregated factor.
    """
    spec = spec if spec is not None else ModelSpec(kind="scale")
    if any(not c > 0 for c in caps):
        raise ValueError("caps must be positive")
    if any(not 0.0 <= f <= 1.0 for f in premium_fractions):
        raise ValueError("premium fractions must lie in [0, 1]")
    rows: List[Dict[str, float]] = []
    for cap in caps:
        for frac in premium_fractions:
            cell = f"sweep cap={cap!r} f={frac!r}"
            specs_cell = default_specs(cap=float(cap))
            db = build_signal_database(
                panel, specs_cell, burn_in=burn_in, premium_fraction=float(frac)
            )
            bs = bootstrap(db, spec, n_samples=n_samples, seed=derive_seed(seed, cell))
            cv_single = cross_validate(
                panel, spec, n_folds, specs_cell, burn_in, float(frac)
            )
            row: Dict[str, float] = {"cap": float(cap), "premium_fraction": float(frac)}
            for pname in bs.names:
                row[pname] = bs.point[pname]
                row[f"t_{pname}"] = bs.t_stat[pname]
            row["r_squared_adj"] = cv_single.r_squared_adj
            agg_spec = ModelSpec(kind="cubic", powers=(0, 1, 3), aggregate="parabolic")
            try:
                cv_agg = cross_validate(
                    panel, agg_spec, n_folds, specs_cell, burn_in, float(frac)
                )
                row["r_squared_adj_aggregated"] = cv_agg.r_squared_adj
            except ValueError:
                row["r_squared_adj_aggregated"] = float("nan")
            rows.append(row)
    return rows
