"""Bayesian change-point linear regression in high dimensions: Gibbs and
Metropolis samplers for segment-wise sparse regression under spike-slab,
Lasso, and group-Lasso priors, with change-point inference, variable
selection, DIC/RMSPE model comparison, and a simulation harness.
"""

__version__ = "0.1.0"

from .inference import (
    ChainConfig,
    Forecast,
    KReport,
    KSelection,
    PosteriorSamples,
    PosteriorSummary,
    compute_dic,
    interval_selection,
    median_probability_model,
    one_step_ahead_forecast,
    rmspe,
    run_chain,
    select_num_changepoints,
    summarize,
)
from .kernels import KernelWorkspace, NumericalError, RngStream
from .model import (
    ChangePointState,
    Dataset,
    GroupLassoPrior,
    InsufficientDataError,
    LassoPrior,
    McmcState,
    NoiseModel,
    SegmentPartition,
    SpikeSlabPrior,
    default_spike_slab_scales,
    log_likelihood,
    partition_by_threshold,
    solve_prior_inclusion,
)
from .simulate import (
    ScenarioSpec,
    SelectionReport,
    gen_covariance,
    gen_dataset,
    run_scenario_grid,
    selection_metrics,
    truncated_mse,
)
from .timeseries import Series, build_lagged, monthly_to_quarterly, pacf

__all__ = [
    "__version__",
    "ChainConfig",
    "ChangePointState",
    "Dataset",
    "Forecast",
    "GroupLassoPrior",
    "InsufficientDataError",
    "KernelWorkspace",
    "KReport",
    "KSelection",
    "LassoPrior",
    "McmcState",
    "NoiseModel",
    "NumericalError",
    "PosteriorSamples",
    "PosteriorSummary",
    "RngStream",
    "ScenarioSpec",
    "SegmentPartition",
    "SelectionReport",
    "Series",
    "SpikeSlabPrior",
    "build_lagged",
    "compute_dic",
    "default_spike_slab_scales",
    "gen_covariance",
    "gen_dataset",
    "interval_selection",
    "log_likelihood",
    "median_probability_model",
    "monthly_to_quarterly",
    "one_step_ahead_forecast",
    "pacf",
    "partition_by_threshold",
    "rmspe",
    "run_chain",
    "run_scenario_grid",
    "select_num_changepoints",
    "selection_metrics",
    "solve_prior_inclusion",
    "summarize",
    "truncated_mse",
]
