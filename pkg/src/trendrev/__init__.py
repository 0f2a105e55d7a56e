"""Multi-horizon trend signals, cubic reversion fits, and the inference
stack (day-block bootstrap, contiguous cross-validation) with a feedback
simulator for end-to-end validation."""

from ._kernels import BACKEND
from .explore import BinCurve, Heatmap, bin_curve, bin_edges, heatmap, smooth_by_counts
from .inference import (
    BootstrapResult,
    CvResult,
    DofBudget,
    EffectiveDimension,
    ModelSpec,
    SubsetResult,
    bootstrap,
    cross_validate,
    derive_seed,
    dof_budget,
    effective_dimension,
    sensitivity_sweep,
    subset_analysis,
)
from .market_data import (
    DATABASE_HEADER,
    HORIZON_LABELS,
    STANDARD_SCALES,
    PriceSeries,
    ReturnPanel,
    ReturnSeries,
    SignalDatabase,
    compute_log_returns,
    normalize_panel,
    panel_from_prices,
    read_database,
    read_prices,
    splice_returns,
    write_database,
    write_prices,
)
from .models import (
    BoundaryCurve,
    CubicFit,
    DecayFit,
    ScaleFit,
    aggregate_weights,
    critical_strength,
    ellipse_boundary,
    fit_cubic,
    fit_decay_model,
    fit_scale_model,
    predict,
)
from .simulator import (
    ContinuumCoefficients,
    SimConfig,
    continuum_coefficients,
    default_assignment,
    psi_potential_coefficients,
    simulate_langevin,
    simulate_panel,
)
from .trend import (
    SCHEMES,
    TrendSpec,
    TrendState,
    build_signal_database,
    cap_floor,
    default_specs,
    direct_trend,
    direct_trend_series,
    tail_cutoff,
    trend_constants,
    update_state,
    weight,
    weight_array,
)

__version__ = "0.1.0"
