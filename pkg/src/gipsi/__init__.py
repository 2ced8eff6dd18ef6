"""GIPSI bipartite market model: shock simulation, mean-field analytics, and
phase-diagram experiments."""

from .core import (
    MarketNetwork,
    MarketState,
    ModelParams,
    ShockSpec,
    apply_shock,
    build_synthetic_network,
    equity_bookkeeping_residual,
    load_network,
    save_network,
)
from .engine import (
    Event,
    EvaluationAtSingularity,
    IntegratorConfig,
    Terminal,
    Trajectory,
    halve_step_check,
    integrate,
    rhs,
    write_events_json,
    write_trajectory_csv,
)
from .experiments import (
    PhaseMap,
    RelaxationResult,
    SweepSpec,
    SyntheticNetworkSpec,
    extract_boundary,
    order_parameter,
    relaxation_time,
    run_sweep,
    unit_network_spec,
    write_boundary_csv,
    write_phase_map_csv,
)
from .meanfield import (
    Degenerate,
    ExponentReport,
    IllConditioned,
    Phase,
    PhaseLabel,
    ReducedParams,
    check_equal_exponents,
    classify,
    eigenvalues,
    fit_dominant_exponent,
    reduce,
    reduced_residual,
    transition_gamma,
)

__version__ = "0.1.0"
