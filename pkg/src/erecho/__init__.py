"""Photon-echo simulation, fitting and memory metrics for Er-doped thin films.

Everything is SI internally; see :mod:`erecho.units` for the lab units
accepted at file and command-line boundaries.
"""
from . import analytic, core, metrics, presets, units
from .analytic import (
    echo_decay,
    echo_efficiency_from_od,
    effective_linewidth,
    homogeneous_linewidth,
    od_from_efficiency,
    stark_echo_amplitude,
    stark_extinction_time,
)
from .core import (
    DephasingParams,
    DipoleKernel,
    EnsembleSpec,
    FitResult,
    InhomogeneousLine,
    PulseSequence,
    SuddenJumpBath,
    SweepCurve,
    ValidationError,
    validate,
)
from .fitting import MODELS, fit, get_model
from .metrics import capability_report, scale_od, semm_feasibility
from .sim import (
    SimConfig,
    saturation_recovery,
    simulate,
    stark_gated_echo,
    three_pulse_sweep,
    two_pulse_decay,
)

__version__ = "0.1.0"

__all__ = [
    "analytic", "core", "metrics", "presets", "units",
    "echo_decay", "echo_efficiency_from_od", "effective_linewidth", "homogeneous_linewidth",
    "od_from_efficiency", "stark_echo_amplitude", "stark_extinction_time",
    "DephasingParams", "DipoleKernel", "EnsembleSpec", "FitResult", "InhomogeneousLine",
    "PulseSequence", "SuddenJumpBath", "SweepCurve", "ValidationError", "validate",
    "MODELS", "fit", "get_model", "capability_report", "scale_od", "semm_feasibility",
    "SimConfig", "saturation_recovery", "simulate", "stark_gated_echo", "three_pulse_sweep",
    "two_pulse_decay", "__version__",
]
