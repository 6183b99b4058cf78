"""Proportional-rate models for time-stamped directed pair events.

Pseudo partial likelihood estimation with node-deletion jackknife sandwich
covariance, plus simulation and Monte Carlo tooling.
"""

__version__ = "0.1.0"

from .data import (CovariateSet, Dataset, EventLog, NodeSet, build_homophily_covariates,
                   enron_preprocess, ingest_events, read_dataset, write_dataset)
from .estimation import (BaselineCurve, FitResult, RiskSetAggregates, aggregates, breslow_baseline,
                         fit, log_pseudo_partial_likelihood, neg_hessian, residual_process, score)
from .simulation import SimulationConfig, gen_covariates, gen_events, mc_study, simulate_dataset
from .variance import (InferenceReport, VarianceEstimates, estimate_variance, inference, sandwich,
                       sigma1_hat, sigma2_jackknife1, sigma2_jackknife2)

__all__ = [
    "CovariateSet", "Dataset", "EventLog", "NodeSet", "build_homophily_covariates",
    "enron_preprocess", "ingest_events", "read_dataset", "write_dataset",
    "BaselineCurve", "FitResult", "RiskSetAggregates", "aggregates", "breslow_baseline", "fit",
    "log_pseudo_partial_likelihood", "neg_hessian", "residual_process", "score",
    "SimulationConfig", "gen_covariates", "gen_events", "mc_study", "simulate_dataset",
    "InferenceReport", "VarianceEstimates", "estimate_variance", "inference", "sandwich",
    "sigma1_hat", "sigma2_jackknife1", "sigma2_jackknife2",
]
