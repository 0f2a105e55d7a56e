"""Nonparametric views of the trend/return relation: bin curves and the
bin-by-horizon heatmap with count-weighted 3x3 smoothing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .market_data import STANDARD_SCALES, SignalDatabase

__all__ = [
    "bin_edges",
    "BinCurve",
    "bin_curve",
    "Heatmap",
    "heatmap",
    "smooth_by_counts",
]


def bin_edges(n_bins: int = 15) -> np.ndarray:
    """Interior edges for ``n_bins`` trend-strength bins.

    The middle ``n_bins - 2`` bins have width 1/3 and straddle zero
    symmetrically; the two outer bins are unbounded. Returns the
    ``n_bins - 1`` finite edges.
    """
    if n_bins < 3 or n_bins % 2 == 0:
        raise ValueError("n_bins must be odd and at least 3")
    half = (n_bins - 2) / 6.0
    return -half + np.arange(n_bins - 1) / 3.0


def _bin_index(edges: np.ndarray, phi: np.ndarray) -> np.ndarray:
    # value equal to an edge falls in the bin to its left
    return np.searchsorted(edges, phi, side="left")


@dataclass(frozen=True)
class BinCurve:
    """Mean next-day return per trend-strength bin.

    Empty bins carry count 0 and nan means.
    """

    edges: np.ndarray
    count: np.ndarray
    mean_phi: np.ndarray
    mean_return: np.ndarray
    scale_ks: Tuple[int, ...]

    @property
    def n_bins(self) -> int:
        return int(self.count.size)

    def zero_crossing(self) -> Optional[float]:
        """Trend strength where the curve turns negative on the positive side.

        Returns the linear interpolation of the last sign change (positive
        to negative) among populated mean_phi > 0 bins, i.e. the boundary
        of the terminal reversal region; near zero the curve hovers around
        0 and earlier flips are noise. None when the curve never ends
        negative.
        """
        ok = (self.count > 0) & (self.mean_phi > 0)
        phi = self.mean_phi[ok]
        ret = self.mean_return[ok]
        order = np.argsort(phi)
        phi, ret = phi[order], ret[order]
        for i in range(phi.size - 2, -1, -1):
            if ret[i] >= 0 > ret[i + 1]:
                frac = ret[i] / (ret[i] - ret[i + 1])
                return float(phi[i] + frac * (phi[i + 1] - phi[i]))
        return None


def bin_curve(
    db: SignalDatabase, n_bins: int = 15, scales: Optional[Sequence[int]] = None
) -> BinCurve:
    """Bin all (day, market, scale) rows by trend strength.

    ``scales`` restricts to a subset of horizons (e.g. the monthly block);
    default uses every horizon in the database.
    """
    edges = bin_edges(n_bins)
    ks = tuple(db.scale_ks) if scales is None else tuple(int(k) for k in scales)
    y, phi, _, _ = db.expand(ks)
    idx = _bin_index(edges, phi)
    count = np.bincount(idx, minlength=n_bins)
    sum_phi = np.bincount(idx, weights=phi, minlength=n_bins)
    sum_y = np.bincount(idx, weights=y, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_phi = np.where(count > 0, sum_phi / count, np.nan)
        mean_y = np.where(count > 0, sum_y / count, np.nan)
    return BinCurve(
        edges=edges,
        count=count.astype(np.int64),
        mean_phi=mean_phi,
        mean_return=mean_y,
        scale_ks=ks,
    )


def smooth_by_counts(values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Count-weighted mean of each cell's 3x3 neighborhood.

    The window is clipped at the matrix border (3x2 at edges, 2x2 at
    corners). Cells whose whole window is empty come back nan.
    """
    values = np.asarray(values, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if values.shape != counts.shape:
        raise ValueError("values and counts must have the same shape")
    num = np.where(counts > 0, values * counts, 0.0)
    num_pad = np.pad(num, 1)
    cnt_pad = np.pad(counts, 1)
    num_sum = np.zeros_like(values)
    cnt_sum = np.zeros_like(values)
    r, c = values.shape
    for di in range(3):
        for dj in range(3):
            num_sum += num_pad[di : di + r, dj : dj + c]
            cnt_sum += cnt_pad[di : di + r, dj : dj + c]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(cnt_sum > 0, num_sum / cnt_sum, np.nan)


@dataclass(frozen=True)
class Heatmap:
    """Mean next-day return refined by trend bin and horizon."""

    edges: np.ndarray
    scale_ks: Tuple[int, ...]
    values: np.ndarray  # raw cell means, nan where empty
    counts: np.ndarray
    smoothed: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape


def heatmap(db: SignalDatabase, n_bins: int = 15) -> Heatmap:
    """Bin-by-horizon matrix of mean returns over all standard horizons."""
    if tuple(db.scale_ks) != STANDARD_SCALES:
        raise ValueError("heatmap needs a database with all standard horizons")
    edges = bin_edges(n_bins)
    n_scales = len(db.scale_ks)
    y, phi, k, _ = db.expand(db.scale_ks)
    col = np.searchsorted(np.asarray(db.scale_ks), k)
    flat = _bin_index(edges, phi) * n_scales + col
    size = n_bins * n_scales
    counts = np.bincount(flat, minlength=size).reshape(n_bins, n_scales)
    sums = np.bincount(flat, weights=y, minlength=size).reshape(n_bins, n_scales)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, sums / counts, np.nan)
    return Heatmap(
        edges=edges,
        scale_ks=tuple(db.scale_ks),
        values=values,
        counts=counts.astype(np.int64),
        smoothed=smooth_by_counts(values, counts),
    )
