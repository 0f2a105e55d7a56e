"""Time the hot kernels on both backends.

Run twice to compare:

    python benchmarks/bench_kernels.py
    TRENDREV_DISABLE_NUMBA=1 python benchmarks/bench_kernels.py

The compiled path matters most for the day bootstrap and the Langevin
integrators; the signal recursion is memory-bound and gains less.
"""

import time

import numpy as np

import trendrev._kernels as _kernels
from trendrev.inference import ModelSpec, bootstrap
from trendrev.simulator import (
    SimConfig,
    continuum_coefficients,
    simulate_langevin,
    simulate_panel,
)
from trendrev.trend import build_signal_database


def clock(label, fn, repeats=3):
    fn()  # warm cache / JIT
    best = min(timeit(fn) for _ in range(repeats))
    print(f"{label:34s} {best * 1e3:9.1f} ms")
    return best


def timeit(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0


def main():
    print(f"backend: {_kernels.BACKEND}")
    cfg = SimConfig(seed=1)  # 24 markets x 7827 days, mean-field feedback
    panel = simulate_panel(cfg)
    clock("simulate_panel (24 x 7827)", lambda: simulate_panel(cfg))
    clock("build_signal_database", lambda: build_signal_database(panel))

    _, db = simulate_panel(cfg, with_database=True)
    spec = ModelSpec(kind="scale")
    clock("bootstrap 1000 reps (scale)",
          lambda: bootstrap(db, spec, n_samples=1000, seed=2))

    co = continuum_coefficients(16.0, 0.1, -0.05)
    clock("langevin phi 1e6 steps",
          lambda: simulate_langevin(co, 1_000_000, 0.2, seed=3, equation="phi"))
    clock("langevin psi 1e6 steps",
          lambda: simulate_langevin(co, 1_000_000, 0.2, seed=3, equation="psi",
                                    psi_potential=(-0.02, 0.01)))


if __name__ == "__main__":
    main()
