"""Robust small-area estimation of Gini coefficients under skewed errors."""

from .cdf import WeightedCdf, area_cdf, gini_from_cdf
from .data import Population, Sample, add_intercept
from .estimators import AreaEstimate, CalibrationSpec, estimate_ginis
from .exceptions import (ConvergenceError, EstimationError, InputError,
                         RankDeficientError, SAEError, ZeroScaleError)
from .fit import FittedModel, area_predictions, fit_mq, fit_reblup
from .gini import empirical_gini, gini_influence, if_calibrated_gini
from .psi import asym_huber_psi, huber_psi, mad_scale, qn_scale
from .tuning import bootstrap_tune, estimate_gamma

__version__ = "0.1.0"

__all__ = [
    "AreaEstimate", "CalibrationSpec", "ConvergenceError", "EstimationError",
    "FittedModel", "InputError", "Population", "RankDeficientError", "SAEError",
    "Sample", "WeightedCdf", "ZeroScaleError", "add_intercept", "area_cdf",
    "area_predictions", "asym_huber_psi", "bootstrap_tune", "empirical_gini",
    "estimate_gamma", "estimate_ginis", "fit_mq", "fit_reblup", "gini_from_cdf",
    "gini_influence", "huber_psi", "if_calibrated_gini", "mad_scale", "qn_scale",
]
