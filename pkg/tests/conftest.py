import numpy as np
import pytest

import trendrev
from trendrev import market_data as md


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # pay the JIT cost once, outside any timed assertion
    trendrev._kernels.warm_up()


def business_days(n, start="2000-01-03"):
    out = []
    d = np.datetime64(start, "D")
    while len(out) < n:
        if np.is_busday(d):
            out.append(d)
        d += 1
    return np.array(out, dtype="datetime64[D]")


@pytest.fixture
def toy_panel():
    """Small deterministic panel: 4 markets, 600 days, iid normal returns."""

    def make(n_markets=4, n_days=600, seed=0, scale=0.01):
        rng = np.random.default_rng(seed)
        dates = business_days(n_days)
        series = [
            md.ReturnSeries(f"mkt{i}", dates, scale * rng.standard_normal(n_days))
            for i in range(n_markets)
        ]
        return md.normalize_panel(series)

    return make
