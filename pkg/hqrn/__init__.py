"""
HQRN (Huber Quantile Regression Networks) Package

Point forecasting of Huber quantiles with dense neural networks:
- Huber quantile, quantile and expectile scoring functions
- Sample and log-normal estimators of the matching functionals
- Networks trained by ADAM with two-phase early stopping
- Skill scores, level estimates and Murphy curves
- The invest-or-refrain decision rule the Huber quantile solves

Main components:
- scoring: Scoring functions and their subgradients
- functionals: Quantiles, expectiles and Huber quantiles of samples and laws
- network: Architectures, training and persistence
- evaluation / decision: Forecast assessment and decision simulation
- FitPipeline: Orchestrate split, normalization, early stopping and refit
- HQRConfig: Configuration management
"""

import logging

from ._version import __version__, get_version, get_version_info, check_python_version

check_python_version()

from .configuration import HQRConfig, get_config, set_config
from .data import (
    DataValidationError,
    Dataset,
    NormStats,
    load_table,
    split_dataset,
    synth_lognormal_regression,
    zscore_apply,
    zscore_fit,
)
from .decision import DecisionPolicy, payoff, regret, simulate_portfolio, tau_from_rates
from .evaluation import (
    EvaluationReport,
    PredictionSet,
    UndefinedScoreError,
    coverage_frequency,
    evaluate_methods,
    huber_level_estimate,
    mean_score,
    murphy_curve,
    skill_score,
)
from .functionals import (
    EmpiricalSample,
    FunctionalRequest,
    LogNormalParams,
    NumericalError,
    QuadratureError,
    distribution_huber_quantile,
    empirical_expectile,
    empirical_huber_quantile,
    empirical_quantile,
    lognormal_fit_mle,
)
from .network import (
    ArchitectureSpec,
    NetworkModel,
    TrainConfig,
    TrainingDivergedError,
    TrainReport,
    architecture_preset,
    load_model,
    predict_batch,
    refit_fixed_epochs,
    save_model,
    train_early_stopping,
)
from .pipeline import FitPipeline, PipelineRun
from .scoring import (
    ScoreParams,
    elementary_score,
    expectile_score,
    huber_quantile_score,
    quantile_score,
    score_subgradient,
)

# CLI is available but not imported by default to avoid heavy imports

__all__ = [
    "HQRConfig",
    "get_config",
    "set_config",
    "DataValidationError",
    "Dataset",
    "NormStats",
    "load_table",
    "split_dataset",
    "synth_lognormal_regression",
    "zscore_apply",
    "zscore_fit",
    "DecisionPolicy",
    "payoff",
    "regret",
    "simulate_portfolio",
    "tau_from_rates",
    "EvaluationReport",
    "PredictionSet",
    "UndefinedScoreError",
    "coverage_frequency",
    "evaluate_methods",
    "huber_level_estimate",
    "mean_score",
    "murphy_curve",
    "skill_score",
    "EmpiricalSample",
    "FunctionalRequest",
    "LogNormalParams",
    "NumericalError",
    "QuadratureError",
    "distribution_huber_quantile",
    "empirical_expectile",
    "empirical_huber_quantile",
    "empirical_quantile",
    "lognormal_fit_mle",
    "ArchitectureSpec",
    "NetworkModel",
    "TrainConfig",
    "TrainingDivergedError",
    "TrainReport",
    "architecture_preset",
    "load_model",
    "predict_batch",
    "refit_fixed_epochs",
    "save_model",
    "train_early_stopping",
    "FitPipeline",
    "PipelineRun",
    "ScoreParams",
    "elementary_score",
    "expectile_score",
    "huber_quantile_score",
    "quantile_score",
    "score_subgradient",
    "__version__",
    "get_version",
    "get_version_info",
]

logging.getLogger(__name__).addHandler(logging.NullHandler())


def get_package_info():
    """Return package information."""
    return {
        "name": "hqrn-package",
        "version": __version__,
        "description": "Huber quantile regression networks for point forecasting",
    }
