"""Benchmark problems, error metrics and experiment drivers."""

from .config import BENCHMARKS, BenchmarkConfig
from .metrics import error_metrics, mean_error, observed_rates, seminorm_error
from .problems import (
    PROBLEMS,
    burgers_exact,
    burgers_problem,
    burgers_source,
    evaluation_grid,
    minsurface_problem,
    minsurface_source,
    semilinear_problem,
    training_grid,
)
from .runner import (
    Report,
    Setup,
    build_reduced,
    evaluate,
    evaluate_burgers,
    evaluate_parametric,
    offline_reduction,
    offline_snapshots,
    parameter_grids,
    reduced_models,
    discretization_study,
    load_mesh,
    run_benchmark,
    run_burgers,
    run_minsurface,
    run_semilinear,
    solve_stationary,
    solve_transient,
    stationary_snapshots,
    time_grid,
    timing_study,
    transient_snapshots,
)
