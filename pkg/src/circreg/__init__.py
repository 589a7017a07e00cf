"""Nonparametric regression for circular responses with Euclidean covariates."""

from circreg.bandwidth import (
    AsymptoticInputs,
    CvConfig,
    amse_local,
    cv_score,
    cv_search,
    h_opt_local,
    select_bandwidth_cv,
)
from circreg.circfit import (
    CircularFit,
    CircularPrediction,
    ObservationSet,
    error_moments_from_truth,
    fit_circular_at,
    predict_surface,
)
from circreg.core import angular_loss, circ_mean_and_resultant, wrap_angle
from circreg.kernels import KernelSpec, kernel_constants, kernel_eval
from circreg.localpoly import BandwidthMatrix, LocalFitSpec, local_fit_real, nw_direct, smoothing_weights
from circreg.simulate import StudyConfig, run_study, sample_von_mises

__all__ = [
    "AsymptoticInputs",
    "BandwidthMatrix",
    "CircularFit",
    "CircularPrediction",
    "CvConfig",
    "KernelSpec",
    "LocalFitSpec",
    "ObservationSet",
    "StudyConfig",
    "amse_local",
    "angular_loss",
    "circ_mean_and_resultant",
    "cv_score",
    "cv_search",
    "error_moments_from_truth",
    "fit_circular_at",
    "h_opt_local",
    "kernel_constants",
    "kernel_eval",
    "local_fit_real",
    "nw_direct",
    "predict_surface",
    "run_study",
    "sample_von_mises",
    "select_bandwidth_cv",
    "smoothing_weights",
    "wrap_angle",
]

__version__ = "0.1.0"
