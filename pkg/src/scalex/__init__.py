"""Compute-optimal model size and token allocation from loss-curve data."""

from scalex.approaches import approach1, approach2, approach3, closed_form_frontier, evaluate_fit, fit_approach
from scalex.curves import cosine_lr, extract_envelope, gaussian_smooth, interpolate_run
from scalex.data_model import (
    Approach,
    BootstrapSummary,
    Diagnostics,
    FinalPoint,
    FrontierPoint,
    ModelShape,
    ParametricParams,
    RunRecord,
    ScalingFit,
    load_final_points,
    load_fit,
    load_runs,
    save_final_points,
    save_fit,
    save_runs,
)
from scalex.errors import DataError, NumericalError, OutOfDomainError, ScalexError, ValidationError
from scalex.flops import approx_flops, count_params, flop_ratio, forward_flops, train_flops
from scalex.frontier import bootstrap, budget_table, predict_opt, segmented_frontier_fit
from scalex.synth import REFERENCE_PARAMS

__version__ = "0.1.0"
