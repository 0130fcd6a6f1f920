"""State-space modelling of in-game betting stakes.

Relative stakes on the home team are modelled as beta-inflated observations
whose mean is shifted by a latent AR(1) market-sentiment process.  The
likelihood is evaluated by discretising the latent state onto a fine grid and
running the HMM forward algorithm.
"""

__version__ = "0.1.0"

from .beinf import BeinfParams, beinf_density, beinf_logpdf, beinf_sample, shapes_from_mean_sd
from .model import MatchSeries, ModelParams, StateGrid, build_grid, mean_predictor, transition_matrix
from .likelihood import ForwardResult, forward, joint_log_likelihood, penalized_objective
from .estimation import FitResult, GridConfig, TuneResult, effective_df, fit, tune
from .forecast import Forecast, flag_outliers, forecast_path, one_step_ahead, predictive_sample
from .simulate import SimConfig, baseline_truth, recovery_study, simulate_dataset, simulate_match, simulate_series
from .data import build_match_series, cross_correlation, descriptives, implied_probability, ingest, relative_stakes
from .strategy import StrategyConfig, backtest

__all__ = [
    "BeinfParams",
    "FitResult",
    "Forecast",
    "ForwardResult",
    "GridConfig",
    "MatchSeries",
    "ModelParams",
    "SimConfig",
    "StateGrid",
    "StrategyConfig",
    "TuneResult",
    "backtest",
    "baseline_truth",
    "beinf_density",
    "beinf_logpdf",
    "beinf_sample",
    "build_grid",
    "build_match_series",
    "cross_correlation",
    "descriptives",
    "effective_df",
    "fit",
    "flag_outliers",
    "forecast_path",
    "forward",
    "implied_probability",
    "ingest",
    "joint_log_likelihood",
    "mean_predictor",
    "one_step_ahead",
    "penalized_objective",
    "predictive_sample",
    "recovery_study",
    "relative_stakes",
    "shapes_from_mean_sd",
    "simulate_dataset",
    "simulate_match",
    "simulate_series",
    "transition_matrix",
    "tune",
]
