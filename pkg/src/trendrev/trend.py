"""Trend-strength weights, recursions, and signal database construction.

A trend strength at horizon exponent k is a weighted sum of past normalized
excess returns, phi(t) = sum_n w(n) * Rhat(t - n), with the weights
normalized so that sum w^2 = 1: on uncorrelated inputs every horizon's
strength has unit variance and strengths are comparable across horizons and
markets. The lookback of horizon k is T = 2^k business days.

Weight schemes:

* ``step``: flat 1/sqrt(T) over the last T days.
* ``ewma``: exponential, M_T * exp(-2n/T) with M_T = sqrt(1 - exp(-4/T)).
* ``xexp``: rising-then-decaying, N_T * (n+1) * exp(-2n/T) with
  N_T = (1 - exp(-4/T))^2 / sqrt(1 - exp(-8/T)). This is the default scheme;
  it admits an exact two-stage recursion (psi feeds phi) so a full panel
  costs O(days x markets x horizons).
* ``mac``: the moving-average-crossover wedge for windows (long, short),
  normalized numerically.

The xexp average lookback sum((n+1) w) / sum(w) equals
(1 + exp(-2/T)) / (1 - exp(-2/T)), i.e. coth(1/T) = T + 1/(3T) + O(T^-3);
the implementation keeps the exact form rather than rounding it to T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .market_data import ReturnPanel, SignalDatabase, STANDARD_SCALES

__all__ = [
    "TrendSpec",
    "TrendState",
    "SCHEMES",
    "default_specs",
    "trend_constants",
    "weight",
    "weight_array",
    "tail_cutoff",
    "update_state",
    "direct_trend",
    "direct_trend_series",
    "cap_floor",
    "build_signal_database",
]

SCHEMES = ("step", "ewma", "xexp", "mac")

DEFAULT_TAIL_EPS = 1e-24  # truncate direct sums where the squared tail mass drops below this


def trend_constants(T: float) -> Tuple[float, float, float]:
    """(q, M_T, N_T) for lookback T: decay factor and the two normalizers."""
    if T < 2:
        raise ValueError("lookback T must be >= 2")
    q = math.exp(-2.0 / T)
    m = math.sqrt(1.0 - math.exp(-4.0 / T))
    n = (1.0 - math.exp(-4.0 / T)) ** 2 / math.sqrt(1.0 - math.exp(-8.0 / T))
    return q, m, n


@dataclass(frozen=True)
class TrendSpec:
    """One horizon's configuration: exponent k (T = 2^k days), scheme, cap."""

    k: int
    scheme: str = "xexp"
    cap: float = 2.5
    mac_long: Optional[int] = None
    mac_short: Optional[int] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("horizon exponent k must be >= 1 (T = 2^k >= 2)")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown weight scheme {self.scheme!r}")
        if not self.cap > 0:
            raise ValueError("cap must be positive (use inf for no capping)")
        if self.scheme == "mac":
            L, S = self.mac_long, self.mac_short
            if L is None or S is None or not (L > S >= 1):
                raise ValueError("mac scheme needs windows long > short >= 1")

    @property
    def T(self) -> int:
        return 2 ** self.k


def default_specs(cap: float = 2.5) -> Tuple[TrendSpec, ...]:
    """The ten standard horizons, 2 days to 4 years, xexp weights."""
    return tuple(TrendSpec(k=k, cap=cap) for k in STANDARD_SCALES)


@dataclass(frozen=True)
class TrendState:
    """Running state of the two-stage recursion at one horizon.

    psi is the plain EWMA stage, phi the trend strength. Updates:
    psi' = q psi + M_T Rhat, then phi' = q phi + (N_T / M_T) psi'.
    """

    psi: float
    phi: float
    q: float
    m_t: float
    n_t: float

    @classmethod
    def initial(cls, T: float) -> "TrendState":
        q, m, n = trend_constants(T)
        return cls(psi=0.0, phi=0.0, q=q, m_t=m, n_t=n)


def update_state(state: TrendState, xhat: float) -> TrendState:
    psi = state.q * state.psi + state.m_t * xhat
    phi = state.q * state.phi + (state.n_t / state.m_t) * psi
    return replace(state, psi=psi, phi=phi)


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


def _mac_wedge(L: int, S: int) -> np.ndarray:
    # short-window average of log prices minus long-window average, expressed
    # as lag weights on returns: rises over the short leg, decays over the long
    u = np.arange(L - 1, dtype=np.float64)
    w = np.maximum(L - 1 - u, 0.0) / L - np.maximum(S - 1 - u, 0.0) / S
    return w / math.sqrt(np.sum(w * w))


def weight(
    scheme: str,
    T: float,
    n,
    *,
    mac_long: Optional[int] = None,
    mac_short: Optional[int] = None,
):
    """Weight at lag n (scalar or array) for the given scheme and lookback."""
    n_arr = np.asarray(n, dtype=np.float64)
    if scheme == "step":
        if T < 1 or T != int(T):
            raise ValueError("step scheme needs an integer lookback T >= 1")
        out = np.where(n_arr < T, 1.0 / math.sqrt(T), 0.0)
    elif scheme == "ewma":
        _, m, _ = trend_constants(T)
        out = m * np.exp(-2.0 * n_arr / T)
    elif scheme == "xexp":
        _, _, nt = trend_constants(T)
        out = nt * (n_arr + 1.0) * np.exp(-2.0 * n_arr / T)
    elif scheme == "mac":
        if mac_long is None or mac_short is None or not (mac_long > mac_short >= 1):
            raise ValueError("mac scheme needs windows long > short >= 1")
        wedge = _mac_wedge(mac_long, mac_short)
        idx = n_arr.astype(np.int64)
        out = np.where(
            (n_arr >= 0) & (n_arr < wedge.size), wedge[np.clip(idx, 0, wedge.size - 1)], 0.0
        )
    else:
        raise ValueError(f"unknown weight scheme {scheme!r}")
    if np.ndim(n) == 0:
        return float(out)
    return out


def tail_cutoff(scheme: str, T: float, tail_eps: float = DEFAULT_TAIL_EPS, **mac) -> int:
    """Smallest lag count whose dropped squared weight mass is below tail_eps."""
    if scheme == "step":
        return int(T)
    if scheme == "mac":
        L = mac.get("mac_long")
        if L is None:
            raise ValueError("mac scheme needs mac_long")
        return int(L - 1)
    if scheme == "ewma":
        x = math.exp(-4.0 / T)
        _, m, _ = trend_constants(T)
        # tail(M) = m^2 x^M / (1 - x)
        cut = math.log(tail_eps * (1.0 - x) / (m * m)) / math.log(x)
        return max(1, int(math.ceil(cut)))
    if scheme == "xexp":
        x = math.exp(-4.0 / T)
        _, _, nt = trend_constants(T)

        def tail(M: int) -> float:
            # sum_{n>=M} (n+1)^2 x^n, closed form
            s = (
                (M + 1) ** 2 / (1.0 - x)
                + 2.0 * (M + 1) * x / (1.0 - x) ** 2
                + x * (1.0 + x) / (1.0 - x) ** 3
            )
            return nt * nt * x ** M * s

        lo, hi = 1, max(4, int(8 * T))
        while tail(hi) >= tail_eps:
            hi *= 2
        while lo < hi:
            mid = (lo + hi) // 2
            if tail(mid) < tail_eps:
                hi = mid
            else:
                lo = mid + 1
        return lo
    raise ValueError(f"unknown weight scheme {scheme!r}")


def weight_array(
    scheme: str,
    T: float,
    n_max: Optional[int] = None,
    tail_eps: float = DEFAULT_TAIL_EPS,
    **mac,
) -> np.ndarray:
    """Weights for lags 0 .. n_max-1 (n_max from tail_cutoff when omitted)."""
    if n_max is None:
        n_max = tail_cutoff(scheme, T, tail_eps, **mac)
    return np.asarray(weight(scheme, T, np.arange(n_max), **mac), dtype=np.float64)


# ---------------------------------------------------------------------------
# direct evaluation (oracle twin of the recursion)
# ---------------------------------------------------------------------------


def direct_trend(
    history: np.ndarray, spec: TrendSpec, tail_eps: float = DEFAULT_TAIL_EPS
) -> float:
    """Trend strength at the end of ``history`` (oldest first) by direct sum."""
    x = np.asarray(history, dtype=np.float64)
    kw = {"mac_long": spec.mac_long, "mac_short": spec.mac_short}
    w = weight_array(spec.scheme, spec.T, tail_eps=tail_eps, **kw)
    n = min(x.size, w.size)
    if n == 0:
        return 0.0
    return float(np.dot(w[:n], x[::-1][:n]))


def direct_trend_series(
    x: np.ndarray, spec: TrendSpec, tail_eps: float = DEFAULT_TAIL_EPS
) -> np.ndarray:
    """phi(t) for every t, via convolution over the available history."""
    x = np.asarray(x, dtype=np.float64)
    kw = {"mac_long": spec.mac_long, "mac_short": spec.mac_short}
    w = weight_array(spec.scheme, spec.T, tail_eps=tail_eps, **kw)
    return np.convolve(x, w)[: x.size]


def cap_floor(phi, cap: float):
    """Clip to [-cap, +cap]; shape-preserving."""
    if not cap > 0:
        raise ValueError("cap must be positive")
    return np.minimum(cap, np.maximum(-cap, phi))


# ---------------------------------------------------------------------------
# database construction
# ---------------------------------------------------------------------------


def _lagged_trends(
    trend_input: np.ndarray, specs: Sequence[TrendSpec]
) -> np.ndarray:
    """phi_k(t-1) for every (day, market, spec); zero-initialized at day 0."""
    D, M = trend_input.shape
    S = len(specs)
    phi_lag = np.empty((D, M, S))
    xexp = [j for j, s in enumerate(specs) if s.scheme == "xexp"]
    if xexp:
        q = np.array([math.exp(-2.0 / specs[j].T) for j in xexp])
        m = np.array([trend_constants(specs[j].T)[1] for j in xexp])
        n = np.array([trend_constants(specs[j].T)[2] for j in xexp])
        part, _, _ = _kernels.trend_recursion(trend_input, q, m, n)
        phi_lag[:, :, xexp] = part
    for j, spec in enumerate(specs):
        if spec.scheme == "xexp":
            continue
        for i in range(M):
            full = direct_trend_series(trend_input[:, i], spec)
            phi_lag[1:, i, j] = full[:-1]
            phi_lag[0, i, j] = 0.0
    return phi_lag


def build_signal_database(
    panel: ReturnPanel,
    specs: Optional[Sequence[TrendSpec]] = None,
    burn_in: int = 522,
    premium_fraction: float = 0.0,
) -> SignalDatabase:
    """Run the trend recursions over a panel and emit the analysis table.

    States start at psi = phi = 0 on the panel's first day; the first
    ``burn_in`` days (default 522, about two trading years) warm the states
    up and are not emitted. The row for day t carries R(t) next to the
    horizon strengths phi_k(t-1), capped at each spec's cap.

    ``premium_fraction`` f feeds the recursion with R - (1-f) mu/sigma:
    f = 0 (default) strips the full estimated premium from the trend input,
    f = 1 leaves it in.
    """
    if specs is None:
        specs = default_specs()
    specs = tuple(specs)
    ks = tuple(s.k for s in specs)
    if len(set(ks)) != len(ks):
        raise ValueError("duplicate horizon exponents in specs")
    D, M = panel.n_days, panel.n_markets
    if not 0 <= burn_in < D:
        raise ValueError(f"burn_in must lie in [0, {D})")
    if D - burn_in < 1:
        raise ValueError("no days left after burn-in")

    trend_input = panel.excess + premium_fraction * panel.premium()[None, :]
    phi_lag = _lagged_trends(trend_input, specs)

    emitted = np.arange(burn_in, D, dtype=np.int64)
    n_emit = emitted.size
    days = np.repeat(emitted, M)
    codes = np.tile(np.arange(M, dtype=np.int32), n_emit)
    returns = panel.normalized[burn_in:].reshape(-1)
    phi = phi_lag[burn_in:].reshape(n_emit * M, len(specs))
    for j, spec in enumerate(specs):
        if np.isfinite(spec.cap):
            phi[:, j] = cap_floor(phi[:, j], spec.cap)

    caps = {s.cap for s in specs}
    return SignalDatabase(
        days=days,
        market_codes=codes,
        markets=panel.markets,
        returns=returns,
        phi=phi,
        scale_ks=ks,
        cap=caps.pop() if len(caps) == 1 else None,
    )
