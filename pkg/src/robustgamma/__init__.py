"""Gamma regression with log-Pareto-tailed errors.

Frequentist and Bayesian fitting of a gamma GLM (log link) whose error
density is replaced in both tails by log-Pareto tails, plus the classical
gamma MLE and a clipped-score M-estimator for comparison.
"""

__version__ = "0.1.0"

from .data import DataError, Dataset, load_csv
from .density import (
    RobustGammaParams,
    TailConstants,
    compute_tail_constants,
    grad_log_pdf,
    log_pdf,
    log_pdf_response,
    pdf,
)
from .estimation import FitResult, Method, fit_cantoni, fit_gamma_mle, fit_robust_mle, pearson_residuals
from .bayes import Chain, HmcConfig, Model, Prior, hmc_sample, hpd_interval, summarize

__all__ = [
    "Chain",
    "DataError",
    "Dataset",
    "FitResult",
    "HmcConfig",
    "Method",
    "Model",
    "Prior",
    "RobustGammaParams",
    "TailConstants",
    "compute_tail_constants",
    "fit_cantoni",
    "fit_gamma_mle",
    "fit_robust_mle",
    "grad_log_pdf",
    "hmc_sample",
    "hpd_interval",
    "load_csv",
    "log_pdf",
    "log_pdf_response",
    "pdf",
    "pearson_residuals",
    "summarize",
]
