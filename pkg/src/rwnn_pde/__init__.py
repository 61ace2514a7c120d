"""Option pricing by backward least-squares regression on frozen random
ReLU features: multi-asset Black-Scholes PDEs and rough-volatility BSPDEs."""

from .benchmarks import (
    PriceReport,
    basket_call,
    bs_closed_form,
    mc_price,
    reference_price,
    vanilla_calls,
)
from .core import (
    CHUNK_SIZE,
    DecompositionError,
    PathBatch,
    SeedSpec,
    TimeGrid,
    correlation_factor,
    make_uniform_grid,
    sample_correlated_increments,
)
from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    fit_loglog_slope,
    run_experiment,
    scaling_table,
)
from .markovian import (
    AffineDriver,
    MarkovianSolve,
    StepDiagnostics,
    backward_solve_markovian,
    build_features_markovian,
    terminal_targets,
)
from .models import (
    BlackScholesModel,
    RoughBergomiModel,
    VolterraKernelPlan,
    build_volterra_plan,
    cholesky_volterra_oracle,
    simulate_bs_paths,
    simulate_rbergomi_paths,
    volterra_covariance,
)
from .nonmarkovian import (
    NonMarkovianSolve,
    StepReadouts,
    backward_solve_nonmarkovian,
    build_features_nonmarkovian,
    z_fields,
)
from .reservoir import (
    Readout,
    Reservoir,
    ReservoirConfig,
    features,
    features_jacobian,
    net_eval,
    net_grad,
    reservoir_from_dict,
    reservoir_to_dict,
    sample_reservoir,
)
from .ridge import (
    MomentAccumulator,
    RidgeSolution,
    SingularSystemError,
    default_ridge_lambda,
    ridge_solve,
)

__version__ = "0.1.0"

__all__ = [
    "AffineDriver",
    "BlackScholesModel",
    "CHUNK_SIZE",
    "DecompositionError",
    "EXPERIMENTS",
    "ExperimentConfig",
    "MarkovianSolve",
    "MomentAccumulator",
    "NonMarkovianSolve",
    "PathBatch",
    "PriceReport",
    "Readout",
    "Reservoir",
    "ReservoirConfig",
    "RidgeSolution",
    "RoughBergomiModel",
    "SeedSpec",
    "SingularSystemError",
    "StepDiagnostics",
    "StepReadouts",
    "TimeGrid",
    "VolterraKernelPlan",
    "backward_solve_markovian",
    "backward_solve_nonmarkovian",
    "basket_call",
    "bs_closed_form",
    "build_features_markovian",
    "build_features_nonmarkovian",
    "build_volterra_plan",
    "cholesky_volterra_oracle",
    "correlation_factor",
    "default_ridge_lambda",
    "features",
    "features_jacobian",
    "fit_loglog_slope",
    "make_uniform_grid",
    "mc_price",
    "net_eval",
    "net_grad",
    "reference_price",
    "reservoir_from_dict",
    "reservoir_to_dict",
    "ridge_solve",
    "run_experiment",
    "sample_correlated_increments",
    "sample_reservoir",
    "scaling_table",
    "simulate_bs_paths",
    "simulate_rbergomi_paths",
    "terminal_targets",
    "vanilla_calls",
    "volterra_covariance",
    "z_fields",
]
