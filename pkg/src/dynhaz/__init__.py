"""Bayesian inference for piecewise exponential hazard models with
time-varying coefficients, via a two-filter particle smoother with
linear-Bayes proposal distributions."""

from .data import (CsvSchema, ExpandedPanel, IntervalPartition, SurvivalRecord,
                   build_partition, expand_exposures, parse_survival_csv)
from .errors import (ConfigurationError, DegeneracyError, Diagnostics, DomainError,
                     DynhazError, NumericalError, RowValidationError, SchemaError)
from .evaluate import EssReport, WaicResult, edm, ess, posterior_expectation, predict_survival, waic
from .model import (DiscountPrior, discount_variance, interval_log_likelihood,
                    rw_transition_logdensity, survival_probability)
from .proposals import (GammaHyper, GaussianSummary, artificial_prior,
                        backward_proposal_moments, forward_proposal_moments,
                        gamma_hyperparameters, laplace_eta_moments,
                        smoothing_proposal_moments)
from .sim import DgpConfig, DgpTruth, PiecewisePaths, simulate_dgp
from .smoother import (BOOTSTRAP, LINEAR_BAYES, ParticleSet, SmootherOutput,
                       run_two_filter_smoother, weighted_moments)

__version__ = "0.1.0"

__all__ = [
    "BOOTSTRAP", "ConfigurationError", "CsvSchema", "DegeneracyError", "DgpConfig",
    "DgpTruth", "Diagnostics", "DiscountPrior", "DomainError", "DynhazError",
    "EssReport", "ExpandedPanel", "GammaHyper", "GaussianSummary",
    "IntervalPartition", "LINEAR_BAYES", "NumericalError", "ParticleSet",
    "PiecewisePaths", "RowValidationError", "SchemaError", "SmootherOutput",
    "SurvivalRecord", "WaicResult", "artificial_prior", "backward_proposal_moments",
    "build_partition", "discount_variance", "edm", "ess", "expand_exposures",
    "forward_proposal_moments", "gamma_hyperparameters", "interval_log_likelihood",
    "laplace_eta_moments", "parse_survival_csv", "posterior_expectation",
    "predict_survival", "run_two_filter_smoother", "rw_transition_logdensity",
    "simulate_dgp", "smoothing_proposal_moments", "survival_probability", "waic",
    "weighted_moments",
]
