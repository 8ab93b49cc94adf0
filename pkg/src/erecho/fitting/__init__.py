"""Levenberg-Marquardt fitting and the named model registry."""
from .lm import LMResult, levenberg_marquardt
from .models import MODELS, ModelSpec, UnknownModel, check_jacobian, get_model
from .ops import (
    FitError,
    SubmodelReport,
    fit,
    fit_echo_decay,
    fit_linear_broadening,
    fit_lorentzian_peak,
    fit_recovery,
    fit_spectral_diffusion,
    fit_stark_modulation,
    fit_submodels,
)

__all__ = [
    "LMResult", "levenberg_marquardt", "MODELS", "ModelSpec", "UnknownModel", "get_model",
    "check_jacobian",
    "FitError", "SubmodelReport", "fit", "fit_echo_decay", "fit_linear_broadening",
    "fit_lorentzian_peak", "fit_recovery", "fit_spectral_diffusion", "fit_stark_modulation",
    "fit_submodels",
]
