"""Reduced-rank linear estimation for perturbed, ill-conditioned linear models."""
from .estimators import (
    EstimatorMatrix,
    ReducedRankWienerEstimator,
    RidgeEstimator,
    TruncatedSVDEstimator,
    WienerEstimator,
    mmse,
    r_mmse,
    r_svd,
    ridge,
)
from .model import LinearModel, PerturbedPair, classify, decompose
from .mse_analysis import closed_form_generic, closed_form_shared, corollary_gaps, mse_exact
from .perturbation_bounds import robustness_certificates

__version__ = "0.1.0"

__all__ = [
    "EstimatorMatrix",
    "LinearModel",
    "PerturbedPair",
    "ReducedRankWienerEstimator",
    "RidgeEstimator",
    "TruncatedSVDEstimator",
    "WienerEstimator",
    "classify",
    "closed_form_generic",
    "closed_form_shared",
    "corollary_gaps",
    "decompose",
    "mmse",
    "mse_exact",
    "r_mmse",
    "r_svd",
    "ridge",
    "robustness_certificates",
]
