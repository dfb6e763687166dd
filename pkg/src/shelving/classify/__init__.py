"""State-discrimination and fitting algorithms."""
from .forest import ForestModel, ForestParams, classify_pixels, train_classifier
from .lm import FitError, LMResult, levenberg_marquardt
from .peakfit import Peak, gaussian_peak_fit
from .report import ErrorReport, LabeledSplit, error_report, make_split, qpn_sigma, wilson_interval
from .subbin import SubbinModel, classify_subbin, log_likelihoods
from .threshold import ThresholdModel, classify_threshold, fit_threshold

__all__ = [
    "ForestModel", "ForestParams", "classify_pixels", "train_classifier",
    "FitError", "LMResult", "levenberg_marquardt", "Peak", "gaussian_peak_fit",
    "ErrorReport", "LabeledSplit", "error_report", "make_split", "qpn_sigma", "wilson_interval",
    "SubbinModel", "classify_subbin", "log_likelihoods",
    "ThresholdModel", "classify_threshold", "fit_threshold",
]
