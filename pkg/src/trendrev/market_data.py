"""Price ingestion, return normalization, and the signal database.

Raw inputs are daily futures price series (one per market). Downstream code
works in normalized units: R = r / sigma, and the excess version
Rhat = R - mu / sigma, where mu and sigma are the per-market mean and
standard deviation of raw log returns over an estimation window. Panels are
rectangular over the union business-day calendar; a market missing a date
carries a zero return for it, which keeps cumulative prices intact. Use
:func:`splice_returns` to backfill a short history from a proxy before
building a panel.

The :class:`SignalDatabase` is the flat analysis table: one row per
(day, market) holding the normalized return R(t) and the capped trend
strengths phi_k(t-1) for the ten standard horizons k = 1..10 (lookbacks of
2^k business days, labelled 2d .. 4y). CSV serialization keeps 17 significant
digits so a round trip is bit-exact.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "PriceSeries",
    "ReturnSeries",
    "ReturnPanel",
    "SignalDatabase",
    "HORIZON_LABELS",
    "STANDARD_SCALES",
    "DATABASE_HEADER",
    "compute_log_returns",
    "splice_returns",
    "normalize_panel",
    "panel_from_prices",
    "write_database",
    "read_database",
    "write_prices",
    "read_prices",
]

# horizon exponent k -> column label; lookback is 2^k business days
HORIZON_LABELS = {
    1: "2d",
    2: "4d",
    3: "8d",
    4: "3w",
    5: "6w",
    6: "3m",
    7: "6m",
    8: "1y",
    9: "2y",
    10: "4y",
}
STANDARD_SCALES: Tuple[int, ...] = tuple(range(1, 11))
DATABASE_HEADER = ["day", "market", "R"] + [
    f"phi_{HORIZON_LABELS[k]}" for k in STANDARD_SCALES
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PriceSeries:
    """Daily settlement prices for one market, strictly increasing dates."""

    market_id: str
    dates: np.ndarray  # datetime64[D]
    prices: np.ndarray  # float64, > 0

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        prices = np.asarray(self.prices, dtype=np.float64)
        if dates.shape != prices.shape or dates.ndim != 1:
            raise ValueError("dates and prices must be 1-d arrays of equal length")
        if dates.size >= 2 and not np.all(dates[1:] > dates[:-1]):
            bad = dates[1:][~(dates[1:] > dates[:-1])][0]
            raise ValueError(f"dates must be strictly increasing (violation at {bad})")
        bad = ~(prices > 0.0) | ~np.isfinite(prices)
        if np.any(bad):
            raise ValueError(
                f"non-positive or non-finite price for {self.market_id} "
                f"on {dates[bad][0]}"
            )
        object.__setattr__(self, "dates", _readonly(dates))
        object.__setattr__(self, "prices", _readonly(prices))

    def __len__(self) -> int:
        return int(self.dates.size)


@dataclass(frozen=True)
class ReturnSeries:
    """Daily log returns for one market; the date is the later day of each pair."""

    market_id: str
    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "dates", _readonly(np.asarray(self.dates, dtype="datetime64[D]"))
        )
        object.__setattr__(
            self, "values", _readonly(np.asarray(self.values, dtype=np.float64))
        )
        if self.dates.shape != self.values.shape:
            raise ValueError("dates and values must have equal length")


def compute_log_returns(series: PriceSeries) -> ReturnSeries:
    """r(t) = ln(P(t) / P(t-1)); one fewer observation than prices."""
    if len(series) < 2:
        raise ValueError(f"{series.market_id}: need at least two prices for returns")
    values = np.log(series.prices[1:] / series.prices[:-1])
    return ReturnSeries(series.market_id, series.dates[1:], values)


def splice_returns(
    base: ReturnSeries,
    proxy: ReturnSeries,
    boundary: Union[str, np.datetime64],
    leverage: float = 1.0,
    financing_rate: float = 0.0,
) -> ReturnSeries:
    """Extend ``base`` backwards with a levered proxy before ``boundary``.

    Proxy days strictly before ``boundary`` contribute
    ``leverage * r_proxy - (leverage - 1) * financing_rate`` (daily log
    financing rate); base days at or after ``boundary`` are kept as-is.
    """
    boundary = np.datetime64(boundary, "D")
    head = proxy.dates < boundary
    tail = base.dates >= boundary
    head_vals = leverage * proxy.values[head] - (leverage - 1.0) * financing_rate
    dates = np.concatenate([proxy.dates[head], base.dates[tail]])
    if dates.size >= 2 and not np.all(dates[1:] > dates[:-1]):
        raise ValueError("spliced series has overlapping or unordered dates")
    values = np.concatenate([head_vals, base.values[tail]])
    return ReturnSeries(base.market_id, dates, values)


@dataclass(frozen=True)
class ReturnPanel:
    """Rectangular daily return panel with per-market normalization constants.

    ``raw`` holds log returns on the union calendar (zero-filled where a
    market has no observation). ``normalized`` is raw / sigma and ``excess``
    subtracts mu / sigma on top. ``estimation_mask`` marks the days whose raw
    returns produced mu and sigma.
    """

    markets: Tuple[str, ...]
    dates: np.ndarray  # (D,) datetime64[D]
    raw: np.ndarray  # (D, M)
    normalized: np.ndarray  # (D, M)
    excess: np.ndarray  # (D, M)
    mu: np.ndarray  # (M,)
    sigma: np.ndarray  # (M,)
    estimation_mask: np.ndarray  # (D,) bool

    def __post_init__(self):
        D, M = np.asarray(self.raw).shape
        if len(self.markets) != M:
            raise ValueError("market count does not match return matrix width")
        for name in ("raw", "normalized", "excess"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (D, M):
                raise ValueError(f"{name} must have shape (n_days, n_markets)")
            object.__setattr__(self, name, _readonly(arr))
        object.__setattr__(
            self, "dates", _readonly(np.asarray(self.dates, dtype="datetime64[D]"))
        )
        if self.dates.size != D:
            raise ValueError("dates length does not match return matrix")
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if mu.shape != (M,) or sigma.shape != (M,):
            raise ValueError("mu and sigma must be per-market vectors")
        if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
            bad = np.asarray(self.markets)[~(sigma > 0)][0]
            raise ValueError(f"market {bad!r} has non-positive return volatility")
        object.__setattr__(self, "mu", _readonly(mu))
        object.__setattr__(self, "sigma", _readonly(sigma))
        mask = np.asarray(self.estimation_mask, dtype=bool)
        if mask.shape != (D,):
            raise ValueError("estimation_mask must be one flag per day")
        object.__setattr__(self, "estimation_mask", _readonly(mask))

    @property
    def n_days(self) -> int:
        return int(self.dates.size)

    @property
    def n_markets(self) -> int:
        return len(self.markets)

    def premium(self) -> np.ndarray:
        """mu / sigma per market, in normalized-return units."""
        return self.mu / self.sigma


def _resolve_window(dates: np.ndarray, estimation_window) -> np.ndarray:
    n = dates.size
    if estimation_window is None:
        return np.ones(n, dtype=bool)
    w = estimation_window
    if isinstance(w, np.ndarray) and w.dtype == bool:
        if w.shape != (n,):
            raise ValueError("boolean estimation window must match panel length")
        return w.copy()
    if isinstance(w, (tuple, list)) and len(w) == 2:
        start, end = np.datetime64(w[0], "D"), np.datetime64(w[1], "D")
        if end < start:
            raise ValueError("estimation window end precedes start")
        return (dates >= start) & (dates <= end)
    idx = np.asarray(w, dtype=np.int64)
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    return mask


def normalize_panel(
    returns: Union[Iterable[ReturnSeries], Mapping[str, ReturnSeries]],
    estimation_window=None,
) -> ReturnPanel:
    """Align per-market returns on the union calendar and normalize.

    mu and sigma use the plain-n (population) variance over the estimation
    window, full panel by default. The window may be a (start, end) date
    pair, a boolean day mask, or an index array. Each market needs at least
    two window days and nonzero variance.
    """
    if isinstance(returns, Mapping):
        series = list(returns.values())
    else:
        series = list(returns)
    if not series:
        raise ValueError("panel needs at least one market")
    names = [s.market_id for s in series]
    if len(set(names)) != len(names):
        raise ValueError("duplicate market ids in panel input")

    dates = np.unique(np.concatenate([s.dates for s in series]))
    D, M = dates.size, len(series)
    raw = np.zeros((D, M))
    for j, s in enumerate(series):
        pos = np.searchsorted(dates, s.dates)
        raw[pos, j] = s.values

    mask = _resolve_window(dates, estimation_window)
    if mask.sum() < 2:
        raise ValueError("estimation window must contain at least two days")
    window = raw[mask]
    mu = window.mean(axis=0)
    sigma = window.std(axis=0)  # population (n) denominator
    if np.any(sigma <= 0):
        bad = names[int(np.flatnonzero(sigma <= 0)[0])]
        raise ValueError(f"market {bad!r} has zero return variance in the window")
    normalized = raw / sigma
    excess = normalized - mu / sigma
    return ReturnPanel(
        markets=tuple(names),
        dates=dates,
        raw=raw,
        normalized=normalized,
        excess=excess,
        mu=mu,
        sigma=sigma,
        estimation_mask=mask,
    )


def panel_from_prices(
    price_series: Sequence[PriceSeries], estimation_window=None
) -> ReturnPanel:
    return normalize_panel(
        [compute_log_returns(s) for s in price_series], estimation_window
    )


# ---------------------------------------------------------------------------
# signal database
# ---------------------------------------------------------------------------


@dataclass
class SignalDatabase:
    """Flat (day, market) table of next-day-return rows and lagged strengths.

    Row for day t pairs the normalized return R(t) with the capped trend
    strengths phi_k(t-1), i.e. regressors never peek at the return they
    predict. Rows are kept day-major (stable-sorted by day on construction).
    """

    days: np.ndarray  # (N,) int64
    market_codes: np.ndarray  # (N,) int32 indices into markets
    markets: Tuple[str, ...]
    returns: np.ndarray  # (N,)
    phi: np.ndarray  # (N, S)
    scale_ks: Tuple[int, ...] = STANDARD_SCALES
    cap: Optional[float] = None

    def __post_init__(self):
        days = np.asarray(self.days, dtype=np.int64)
        codes = np.asarray(self.market_codes, dtype=np.int32)
        rets = np.asarray(self.returns, dtype=np.float64)
        phi = np.asarray(self.phi, dtype=np.float64)
        n = days.size
        if codes.size != n or rets.size != n or phi.shape[0] != n:
            raise ValueError("database columns must share one row count")
        if phi.ndim != 2 or phi.shape[1] != len(self.scale_ks):
            raise ValueError("phi width must match the number of scales")
        if len(self.scale_ks) != len(set(self.scale_ks)):
            raise ValueError("duplicate scale exponents")
        if n and (codes.min() < 0 or codes.max() >= len(self.markets)):
            raise ValueError("market code out of range")
        order = np.argsort(days, kind="stable")
        if not np.all(order == np.arange(n)):
            days, codes, rets, phi = days[order], codes[order], rets[order], phi[order]
        key = days.astype(np.int64) * len(self.markets) + codes
        if np.unique(key).size != n:
            raise ValueError("duplicate (day, market) row")
        self.days = days
        self.market_codes = codes
        self.returns = rets
        self.phi = phi
        self.markets = tuple(self.markets)
        self.scale_ks = tuple(int(k) for k in self.scale_ks)

    @property
    def n_rows(self) -> int:
        return int(self.days.size)

    @property
    def n_scales(self) -> int:
        return len(self.scale_ks)

    def unique_days(self) -> np.ndarray:
        return np.unique(self.days)

    def scale_column(self, k: int) -> int:
        try:
            return self.scale_ks.index(k)
        except ValueError:
            raise KeyError(f"scale exponent {k} not in database") from None

    def select(self, markets=None, days=None) -> "SignalDatabase":
        """Row subset by market names and/or a day mask or day set."""
        keep = np.ones(self.n_rows, dtype=bool)
        if markets is not None:
            codes = {self.markets.index(m) for m in markets}
            keep &= np.isin(self.market_codes, sorted(codes))
        if days is not None:
            days_arr = np.asarray(days)
            if days_arr.dtype == bool:
                keep &= days_arr[self.days]
            else:
                keep &= np.isin(self.days, days_arr)
        return SignalDatabase(
            self.days[keep],
            self.market_codes[keep],
            self.markets,
            self.returns[keep],
            self.phi[keep],
            self.scale_ks,
            self.cap,
        )

    def expand(self, scales: Optional[Sequence[int]] = None):
        """Long view: one entry per (row, scale).

        Returns (y, phi, k, day) flat arrays ordered row-major, so day order
        is preserved for day-grouped statistics.
        """
        ks = tuple(scales) if scales is not None else self.scale_ks
        cols = [self.scale_column(k) for k in ks]
        n, s = self.n_rows, len(cols)
        phi = self.phi[:, cols].reshape(-1)
        y = np.repeat(self.returns, s)
        k = np.tile(np.asarray(ks, dtype=np.float64), n)
        day = np.repeat(self.days, s)
        return y, phi, k, day

    def per_market_scale(self, assignment: Mapping[str, int]):
        """One entry per row, each market read at its own assigned scale.

        Returns (y, phi, k, day). Useful when each market's returns are
        believed (or simulated) to follow a single-horizon rule.
        """
        col = np.empty(len(self.markets), dtype=np.int64)
        for name, k in assignment.items():
            col[self.markets.index(name)] = self.scale_column(k)
        missing = set(self.markets) - set(assignment)
        if missing:
            raise ValueError(f"assignment missing markets: {sorted(missing)}")
        cols = col[self.market_codes]
        phi = self.phi[np.arange(self.n_rows), cols]
        ks = np.asarray(self.scale_ks, dtype=np.float64)[cols]
        return self.returns.copy(), phi, ks, self.days.copy()

    def aggregate_series(self, weights: np.ndarray):
        """Weighted average of the phi columns; weights are renormalized to sum 1."""
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (self.n_scales,):
            raise ValueError("need one weight per scale")
        total = w.sum()
        if total <= 0:
            raise ValueError("aggregate weights must have positive sum")
        return self.phi @ (w / total)


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_database(db: SignalDatabase, path: Union[str, os.PathLike]) -> None:
    """Serialize to the standard 13-column CSV (17 significant digits)."""
    if db.scale_ks != STANDARD_SCALES:
        raise ValueError("CSV layout is defined for the ten standard scales only")
    for m in db.markets:
        if "," in m or "\n" in m or '"' in m:
            raise ValueError(f"market id {m!r} not representable in CSV")
    buf = io.StringIO()
    buf.write(",".join(DATABASE_HEADER) + "\n")
    names = np.asarray(db.markets)
    for i in range(db.n_rows):
        fields = [str(int(db.days[i])), str(names[db.market_codes[i]]), _fmt(db.returns[i])]
        fields.extend(_fmt(v) for v in db.phi[i])
        buf.write(",".join(fields) + "\n")
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def read_database(path: Union[str, os.PathLike]) -> SignalDatabase:
    """Parse the standard database CSV; malformed rows fail with a line number."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if [h.strip() for h in header] != DATABASE_HEADER:
            missing = set(DATABASE_HEADER) - {h.strip() for h in header}
            if missing:
                raise ValueError(
                    f"{path}: missing column(s) {sorted(missing)} in header"
                )
            raise ValueError(f"{path}: header does not match expected layout")
        days, names, rets, phis = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(DATABASE_HEADER):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(DATABASE_HEADER)} "
                    f"fields, got {len(row)}"
                )
            try:
                days.append(int(row[0]))
                rets.append(float(row[2]))
                phis.append([float(v) for v in row[3:]])
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: malformed numeric field"
                ) from None
            names.append(row[1])
    markets = tuple(dict.fromkeys(names))
    index = {m: i for i, m in enumerate(markets)}
    codes = np.fromiter((index[n] for n in names), dtype=np.int32, count=len(names))
    return SignalDatabase(
        np.asarray(days, dtype=np.int64),
        codes,
        markets,
        np.asarray(rets, dtype=np.float64),
        np.asarray(phis, dtype=np.float64).reshape(len(days), len(STANDARD_SCALES)),
        STANDARD_SCALES,
    )


def write_prices(series: Sequence[PriceSeries], path: Union[str, os.PathLike]) -> None:
    """Serialize price series to the long `date,market,price` CSV."""
    buf = io.StringIO()
    buf.write("date,market,price\n")
    for s in series:
        if "," in s.market_id or "\n" in s.market_id:
            raise ValueError(f"market id {s.market_id!r} not representable in CSV")
        for d, p in zip(s.dates, s.prices):
            buf.write(f"{d},{s.market_id},{_fmt(p)}\n")
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def read_prices(path: Union[str, os.PathLike]) -> list:
    """Parse a long `date,market,price` CSV into per-market PriceSeries.

    Rows may arrive in any order; within a market they are sorted by date.
    Malformed rows fail with a line number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if [h.strip() for h in header] != ["date", "market", "price"]:
            raise ValueError(f"{path}: expected header date,market,price")
        dates: Dict[str, list] = {}
        prices: Dict[str, list] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}: line {lineno}: expected 3 fields")
            try:
                d = np.datetime64(row[0].strip(), "D")
                p = float(row[2])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: malformed field") from None
            m = row[1].strip()
            dates.setdefault(m, []).append(d)
            prices.setdefault(m, []).append(p)
    out = []
    for m in dates:
        d = np.asarray(dates[m], dtype="datetime64[D]")
        p = np.asarray(prices[m], dtype=np.float64)
        order = np.argsort(d, kind="stable")
        out.append(PriceSeries(m, d[order], p[order]))
    return out
