"""Synthetic panel generator with trend feedback, and continuum-limit tools.

The generator closes the loop that the fitted models describe: each day's
normalized excess return is a polynomial signal evaluated on yesterday's
trend strengths plus fresh noise,

    Rhat(t+1) = sum_k wbar_k [ b f_k phi_k(t) + c phi_k(t)^3 ] + eps(t+1),

with f_k = 1 - (k - k0)^2 / delta_k^2 the peak-form amplitude profile. Three
feedback layouts:

* ``mean_field`` (default): every market feels the weighted average signal
  over the active horizons.
* ``per_market_scale``: each market runs the rule at one designated horizon
  (round-robin over the active ones unless an assignment is given). This is
  the layout whose rows, read back at each market's own horizon, satisfy the
  regression equation exactly.
* ``none``: pure noise, for null calibration.

Noise is cross-sectionally correlated through equicorrelated blocks
(``n_blocks`` groups with within-block correlation ``block_rho``) and can be
Student-t distributed (rescaled to unit variance). A constant premium can be
added on top of the feedback loop; the trends always run on the excess part.

The continuum helpers express one horizon's recursion, for lookback T large,
as a second-order Langevin equation with damping 2/T, and provide explicit
Euler-Maruyama integrators for that equation and for the first-order (psi)
variant used to study escape from the metastable trend-following well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from . import _kernels
from .market_data import ReturnPanel, STANDARD_SCALES
from .trend import TrendSpec, build_signal_database, trend_constants

__all__ = [
    "SimConfig",
    "simulate_panel",
    "default_assignment",
    "ContinuumCoefficients",
    "continuum_coefficients",
    "psi_potential_coefficients",
    "simulate_langevin",
]


def default_assignment(
    markets: Sequence[str], scales: Sequence[int] = STANDARD_SCALES
) -> Dict[str, int]:
    """Round-robin horizon assignment for per-market-scale feedback."""
    scales = tuple(scales)
    return {m: scales[i % len(scales)] for i, m in enumerate(markets)}


@dataclass(frozen=True)
class SimConfig:
    """Feedback-panel configuration.

    Defaults give a full-scale research panel: 24 markets over 7827 business days
    (522 warm-up days plus 7305 emitted ones, about 28 years), noise in 8
    perfectly correlated blocks of 3, and amplitudes near the fitted values.
    """

    n_markets: int = 24
    n_days: int = 7827
    b: float = 0.02
    c: float = -0.0063
    k0: float = 5.78
    delta_k: float = 4.87
    feedback: str = "mean_field"
    active_scales: Tuple[int, ...] = STANDARD_SCALES
    feedback_weights: Optional[Tuple[float, ...]] = None  # per active scale, sum 1
    assignment: Optional[Tuple[int, ...]] = None  # per market, used by per_market_scale
    feedback_cap: Optional[float] = None  # clip phi inside the signal; None = raw
    premium: Union[float, Tuple[float, ...]] = 0.0  # per-market, in sigma units
    n_blocks: int = 8
    block_rho: float = 1.0
    noise: str = "normal"
    t_dof: float = 5.0
    q_b: float = 0.0  # linear amplitude decay per year, b(t) = b (1 - q_b t)
    q_c: float = 0.0
    decay_origin_day: Optional[int] = None  # default: midpoint of the run
    days_per_year: float = 261.0
    seed: int = 0
    abort_level: float = 50.0

    def __post_init__(self):
        if self.n_markets < 1 or self.n_days < 2:
            raise ValueError("need at least one market and two days")
        if self.feedback not in ("mean_field", "per_market_scale", "none"):
            raise ValueError(f"unknown feedback mode {self.feedback!r}")
        if not self.active_scales or any(k < 1 for k in self.active_scales):
            raise ValueError("active_scales must be nonempty horizon exponents >= 1")
        if self.feedback_weights is not None and len(self.feedback_weights) != len(
            self.active_scales
        ):
            raise ValueError("need one feedback weight per active scale")
        if self.assignment is not None:
            if len(self.assignment) != self.n_markets:
                raise ValueError("need one assigned scale per market")
            if any(k not in self.active_scales for k in self.assignment):
                raise ValueError("assigned scales must be active")
        if not 1 <= self.n_blocks <= self.n_markets:
            raise ValueError("n_blocks must lie in [1, n_markets]")
        if not 0.0 <= self.block_rho <= 1.0:
            raise ValueError("block_rho must lie in [0, 1]")
        if self.noise not in ("normal", "student_t"):
            raise ValueError(f"unknown noise kind {self.noise!r}")
        if self.noise == "student_t" and not self.t_dof > 2:
            raise ValueError("student_t noise needs t_dof > 2 for finite variance")
        if self.feedback_cap is not None and not self.feedback_cap > 0:
            raise ValueError("feedback_cap must be positive")


def _draw_noise(cfg: SimConfig, rng: np.random.Generator) -> np.ndarray:
    D, M = cfg.n_days, cfg.n_markets
    if cfg.noise == "student_t":
        # rescale to unit variance: Var(t_nu) = nu / (nu - 2)
        scale = math.sqrt((cfg.t_dof - 2.0) / cfg.t_dof)
        block = rng.standard_t(cfg.t_dof, size=(D, cfg.n_blocks)) * scale
        idio = rng.standard_t(cfg.t_dof, size=(D, M)) * scale
    else:
        block = rng.standard_normal((D, cfg.n_blocks))
        idio = rng.standard_normal((D, M))
    block_of = (np.arange(M) * cfg.n_blocks) // M
    rho = cfg.block_rho
    return math.sqrt(rho) * block[:, block_of] + math.sqrt(1.0 - rho) * idio


def _feedback_weights(cfg: SimConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(lin_w, cub_w) per (market, active scale) plus the assignment array."""
    ks = np.asarray(cfg.active_scales, dtype=np.float64)
    M, S = cfg.n_markets, ks.size
    f_k = 1.0 - ((ks - cfg.k0) / cfg.delta_k) ** 2
    lin_w = np.zeros((M, S))
    cub_w = np.zeros((M, S))
    assign = np.full(M, -1, dtype=np.int64)
    if cfg.feedback == "mean_field":
        if cfg.feedback_weights is not None:
            wbar = np.asarray(cfg.feedback_weights, dtype=np.float64)
            if not wbar.sum() > 0:
                raise ValueError("feedback weights must have positive sum")
            wbar = wbar / wbar.sum()
        else:
            wbar = np.full(S, 1.0 / S)
        lin_w[:] = wbar * cfg.b * f_k
        cub_w[:] = wbar * cfg.c
    elif cfg.feedback == "per_market_scale":
        if cfg.assignment is not None:
            assign_k = np.asarray(cfg.assignment, dtype=np.int64)
        else:
            assign_k = np.asarray(
                [cfg.active_scales[i % S] for i in range(M)], dtype=np.int64
            )
        for i in range(M):
            s = cfg.active_scales.index(int(assign_k[i]))
            lin_w[i, s] = cfg.b * f_k[s]
            cub_w[i, s] = cfg.c
            assign[i] = assign_k[i]
    return lin_w, cub_w, assign


def simulate_panel(
    cfg: SimConfig,
    with_database: bool = False,
    burn_in: int = 522,
    specs: Optional[Sequence[TrendSpec]] = None,
):
    """Generate a panel; optionally also run the standard signal build on it.

    Returns the ReturnPanel, or (panel, database) with ``with_database``.
    The panel's sigma is 1 by construction, so raw and normalized returns
    coincide and the configured premium is mu itself. Raises if any trend
    strength passes the abort level (runaway feedback).
    """
    D, M = cfg.n_days, cfg.n_markets
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed)]))
    eps = _draw_noise(cfg, rng)

    ks = cfg.active_scales
    q = np.array([trend_constants(2 ** k)[0] for k in ks])
    m = np.array([trend_constants(2 ** k)[1] for k in ks])
    n = np.array([trend_constants(2 ** k)[2] for k in ks])
    lin_w, cub_w, assign = _feedback_weights(cfg)

    origin = cfg.decay_origin_day if cfg.decay_origin_day is not None else (D - 1) / 2.0
    t_years = (np.arange(D) - origin) / cfg.days_per_year
    lin_t = 1.0 - cfg.q_b * t_years
    cub_t = 1.0 - cfg.q_c * t_years

    cap = cfg.feedback_cap if cfg.feedback_cap is not None else np.inf
    xhat, _, _, abort_day = _kernels.simulate(
        eps, q, m, n, lin_w, cub_w, lin_t, cub_t, float(cap), float(cfg.abort_level)
    )
    if abort_day >= 0:
        raise ValueError(
            f"feedback ran away: |phi| exceeded {cfg.abort_level} on day {abort_day}"
        )

    premium = np.broadcast_to(
        np.asarray(cfg.premium, dtype=np.float64), (M,)
    ).astype(np.float64)
    raw = xhat + premium[None, :]
    markets = tuple(f"sim{i:02d}" for i in range(M))
    dates = np.busday_offset(
        np.datetime64("1992-01-02"), np.arange(D), roll="forward"
    ).astype("datetime64[D]")
    panel = ReturnPanel(
        markets=markets,
        dates=dates,
        raw=raw,
        normalized=raw.copy(),
        excess=xhat,
        mu=premium.copy(),
        sigma=np.ones(M),
        estimation_mask=np.ones(D, dtype=bool),
    )
    if not with_database:
        return panel
    db = build_signal_database(panel, specs=specs, burn_in=burn_in)
    return panel, db


# ---------------------------------------------------------------------------
# continuum limit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContinuumCoefficients:
    """Coefficients of the large-T Langevin form of one horizon's dynamics.

    phi obeys (d/dt + damping)^2 phi = force_scale * signal + noise_scale *
    white noise; with the cubic feedback signal the force derives from the
    potential V(phi) = quad * phi^2 + quart * phi^4 (quart uses |c|, the
    stabilizing sign). The psi stage alone is an Ornstein-Uhlenbeck process
    with the same damping and noise amplitude psi_noise.
    """

    T: float
    damping: float
    force_scale: float
    noise_scale: float
    quad: float
    quart: float
    psi_damping: float
    psi_noise: float


def continuum_coefficients(T: float, b: float, c: float) -> ContinuumCoefficients:
    """Large-T coefficients at lookback T for feedback amplitudes (b, c).

    damping = 2/T, force and noise scale = 4 sqrt(2) T^(-3/2), potential
    quad = -2 sqrt(2) b T^(-3/2) and quart = sqrt(2) |c| T^(-3/2). The
    expressions are arranged so powers of two stay exact in floating point.
    """
    if T < 2:
        raise ValueError("lookback T must be >= 2")
    damping = 2.0 / T
    force_scale = 4.0 * math.sqrt(2.0 / (T * T * T))
    quad = -b * math.sqrt(8.0 / (T * T * T))
    quart = abs(c) * math.sqrt(2.0 / (T * T * T))
    psi_noise = 2.0 / math.sqrt(T)
    return ContinuumCoefficients(
        T=float(T),
        damping=damping,
        force_scale=force_scale,
        noise_scale=force_scale,
        quad=quad,
        quart=quart,
        psi_damping=damping,
        psi_noise=psi_noise,
    )


def psi_potential_coefficients(
    T: float, b_tilde: float, c_tilde: float, mode: str = "derived"
) -> Tuple[float, float]:
    """(quad, quart) of the effective potential for the first-order stage.

    "derived" carries the T-dependence through the substitution into the
    first-order equation: quad = -b_tilde / sqrt(T), quart = |c_tilde| /
    (2 sqrt(T)). "printed" is the T-free normalization quad = -b_tilde / 4,
    quart = |c_tilde| / 8 that treats the amplitudes as already rescaled;
    both give the same shape, differing by an overall factor.
    """
    if mode == "derived":
        return -b_tilde / math.sqrt(T), abs(c_tilde) / (2.0 * math.sqrt(T))
    if mode == "printed":
        return -b_tilde / 4.0, abs(c_tilde) / 8.0
    raise ValueError(f"unknown mode {mode!r}")


def simulate_langevin(
    coeffs: ContinuumCoefficients,
    n_steps: int,
    step_size: float,
    seed: int = 0,
    equation: str = "phi",
    psi_potential: Optional[Tuple[float, float]] = None,
    init: float = 0.0,
    init_velocity: float = 0.0,
    abort_level: float = 50.0,
) -> np.ndarray:
    """Integrate the continuum dynamics by explicit Euler-Maruyama.

    equation "phi" runs the second-order trend equation with the potential
    (coeffs.quad, coeffs.quart); "psi" runs the first-order stage with
    psi_potential (default (0, 0): a pure Ornstein-Uhlenbeck process).
    Returns the path including the initial point (length n_steps + 1).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if not 0 < step_size * coeffs.damping < 1:
        raise ValueError("step_size must satisfy 0 < step_size * damping < 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    xi = rng.standard_normal(n_steps)
    if equation == "phi":
        path, abort = _kernels.langevin_second_order(
            xi,
            float(step_size),
            coeffs.damping,
            coeffs.quad,
            coeffs.quart,
            coeffs.noise_scale,
            float(init),
            float(init_velocity),
            float(abort_level),
        )
    elif equation == "psi":
        quad, quart = psi_potential if psi_potential is not None else (0.0, 0.0)
        path, abort = _kernels.langevin_first_order(
            xi,
            float(step_size),
            coeffs.psi_damping,
            float(quad),
            float(quart),
            coeffs.psi_noise,
            float(init),
            float(abort_level),
        )
    else:
        raise ValueError(f"unknown equation {equation!r}")
    if abort >= 0:
        raise ValueError(
            f"path escaped past {abort_level} at step {abort}; "
            "the step size is likely too large for these coefficients"
        )
    return path
