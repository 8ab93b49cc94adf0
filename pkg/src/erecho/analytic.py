"""Closed-form photon-echo models.

Decay laws, linewidth relations, the spectral-diffusion linewidth law, the
orientation-averaged Stark echo amplitude, saturation-recovery curves and
the optical-depth / echo-efficiency bookkeeping.  Everything is SI with
ordinary (not angular) frequencies.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import DephasingParams, DipoleKernel, EnsembleSpec, ensure_valid
from .quadrature import adaptive_quad, fixed_quad, order_for_phase

__all__ = [
    "DomainError",
    "TLS_LOG",
    "StarkKernel",
    "homogeneous_linewidth",
    "t2_from_linewidth",
    "echo_decay",
    "temperature_broadening",
    "effective_linewidth",
    "sd_full",
    "sd_bath_only",
    "sd_tls_only",
    "stark_echo_amplitude",
    "stark_extinction_time",
    "ExtinctionUnreachable",
    "double_exp_recovery",
    "lorentzian",
    "EfficiencyForm",
    "EchoEfficiency",
    "echo_efficiency_from_od",
    "od_from_efficiency",
    "MemoryMetrics",
    "memory_metrics",
]

# Logarithm used by the TLS term of the spectral-diffusion law.  Recorded in
# fit metadata so results can be re-expressed under a log10 convention.
TLS_LOG = "natural"


class DomainError(ValueError):
    pass


def _check(cond, msg):
    if not np.all(cond):
        raise DomainError(msg)


def homogeneous_linewidth(t2):
    """gamma_h = 1 / (pi T2), FWHM in Hz."""
    t2 = np.asarray(t2, dtype=float)
    _check(t2 > 0, "t2 must be > 0")
    out = 1.0 / (math.pi * t2)
    return float(out) if out.ndim == 0 else out


def t2_from_linewidth(gamma_h):
    gamma_h = np.asarray(gamma_h, dtype=float)
    _check(gamma_h > 0, "linewidth must be > 0")
    out = 1.0 / (math.pi * gamma_h)
    return float(out) if out.ndim == 0 else out


def echo_decay(tau, i0: float, t2: float, x: float = 1.0):
    """Two-pulse echo intensity I0 * exp(-(4 tau / T2)**x).

    The stretch exponent acts on the whole ratio; for x = 1 this is the
    plain exponential.
    """
    tau = np.asarray(tau, dtype=float)
    _check(t2 > 0, "t2 must be > 0")
    _check(x >= 1, "stretch exponent x must be >= 1")
    _check(tau >= 0, "tau must be >= 0")
    out = i0 * np.exp(-np.power(4.0 * tau / t2, x))
    return float(out) if out.ndim == 0 else out


def temperature_broadening(temp, gamma0p: float, alpha: float):
    """Linear TLS broadening gamma0' + alpha T."""
    temp = np.asarray(temp, dtype=float)
    _check(temp >= 0, "temperature must be >= 0")
    _check(alpha >= 0, "alpha must be >= 0")
    out = gamma0p + alpha * temp
    return float(out) if out.ndim == 0 else out


def sd_full(t_wait, gamma0, gamma_sd, rate_r, gamma_tls, t0):
    t_wait = np.asarray(t_wait, dtype=float)
    return (gamma0 + 0.5 * gamma_sd * -np.expm1(-rate_r * t_wait)
            + gamma_tls * np.log(t_wait / t0))


def sd_bath_only(t_wait, gamma0, gamma_sd, rate_r):
    t_wait = np.asarray(t_wait, dtype=float)
    return gamma0 + 0.5 * gamma_sd * -np.expm1(-rate_r * t_wait)


def sd_tls_only(t_wait, gamma0, gamma_tls, t0):
    t_wait = np.asarray(t_wait, dtype=float)
    return gamma0 + gamma_tls * np.log(t_wait / t0)


def effective_linewidth(params: DephasingParams, t_wait):
    """Effective linewidth after a waiting time (Hz).

    gamma0 + gamma_SD/2 (1 - exp(-R T_W)) + gamma_TLS ln(T_W / t0).
    """
    ensure_valid(params, "DephasingParams")
    t = np.asarray(t_wait, dtype=float)
    if np.any(t < params.t0):
        raise DomainError(
            f"t_wait must be >= t0 = {params.t0:g} s so the TLS log term is non-negative")
    out = sd_full(t, params.gamma0, params.gamma_sd, params.rate_r, params.gamma_tls, params.t0)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Stark echo modulation


@dataclass(frozen=True)
class StarkKernel:
    """Dipole-orientation weight plus its integral over [0, pi/2]."""

    kernel: DipoleKernel
    normalization: float

    @classmethod
    def of(cls, kernel) -> "StarkKernel":
        if isinstance(kernel, StarkKernel):
            return kernel
        k = DipoleKernel(kernel)
        norm = fixed_quad(k.weight, 0.0, math.pi / 2, 64)
        return cls(k, float(norm))


def _as_kernel(kernel) -> StarkKernel:
    return StarkKernel.of(kernel)


def stark_echo_amplitude(pulse_area, stark_k: float, kernel="sin4", *,
                         tol: float = 1e-9, order: int | None = None):
    """Orientation-averaged echo amplitude after a Stark pulse.

    A(a) = int_0^{pi/2} cos(2 pi k a cos(theta)) w(theta) dtheta / int w,
    so A(0) = 1.  ``pulse_area`` is field x duration in V s / m and
    ``stark_k`` is in Hz per V/m.  With ``order=None`` the Gauss-Legendre
    order is doubled until the estimate moves by less than ``tol``.
    """
    sk = _as_kernel(kernel)
    area = np.asarray(pulse_area, dtype=float)
    _check(area >= 0, "pulse area must be >= 0")
    phase = 2.0 * math.pi * stark_k * area.ravel()

    def integrand(theta):
        w = sk.kernel.weight(theta) / sk.normalization
        return np.cos(np.multiply.outer(phase, np.cos(theta))) * w

    if order is None:
        pmax = float(np.max(np.abs(phase))) if phase.size else 0.0
        vals, _ = adaptive_quad(integrand, 0.0, math.pi / 2, tol=tol, phase=pmax)
    else:
        vals = fixed_quad(integrand, 0.0, math.pi / 2, order)
    vals = np.clip(vals, -1.0, 1.0)
    vals = np.where(phase == 0.0, 1.0, vals)
    out = vals.reshape(area.shape)
    return float(out) if out.ndim == 0 else out


def stark_amplitude_dk(pulse_area, stark_k: float, kernel, order: int):
    """Derivative of :func:`stark_echo_amplitude` with respect to k."""
    sk = _as_kernel(kernel)
    area = np.asarray(pulse_area, dtype=float).ravel()
    a2 = 2.0 * math.pi * area

    def integrand(theta):
        c = np.cos(theta)
        w = sk.kernel.weight(theta) / sk.normalization
        return -np.sin(np.multiply.outer(a2 * stark_k, c)) * np.multiply.outer(a2, c) * w

    return fixed_quad(integrand, 0.0, math.pi / 2, order)


class ExtinctionUnreachable(ValueError):
    def __init__(self, target, min_abs_amplitude, max_area):
        self.target = target
        self.min_abs_amplitude = min_abs_amplitude
        self.max_area = max_area
        super().__init__(
            f"extinction {target:g} not reached up to pulse area {max_area:g} V s/m; "
            f"smallest |A| achieved was {min_abs_amplitude:.4g}")


def stark_extinction_time(field: float, stark_k: float, kernel="sin4", target: float = 1.0,
                          *, max_cycles: float = 50.0, max_area: float | None = None,
                          rtol: float = 1e-3, points_per_period: int = 256) -> float:
    """Shortest Stark pulse giving |A| <= 1 - target at a fixed field.

    The amplitude is scanned on a grid of ``points_per_period`` points per
    Stark oscillation period 1/(k E); the first crossing is refined by
    bisection to ``rtol`` relative time.  ``target = 1`` means the first
    zero of A.
    """
    if not field > 0 or not stark_k > 0:
        raise DomainError("field and stark_k must be > 0")
    if not 0 < target <= 1:
        raise DomainError("target must lie in (0, 1]")
    sk = _as_kernel(kernel)
    threshold = 1.0 - target
    period = 1.0 / (stark_k * field)
    t_max = (max_area / field) if max_area is not None else max_cycles * period
    n = int(math.ceil(t_max / period * points_per_period))
    dt = period / points_per_period
    times = np.arange(n + 1) * dt

    amp = stark_echo_amplitude(field * times, stark_k, sk)
    if target == 1.0:
        g = lambda a: a  # noqa: E731  first sign change of A itself
        hit = np.flatnonzero(amp <= 0.0)
    else:
        g = lambda a: abs(a) - threshold  # noqa: E731
        hit = np.flatnonzero(np.abs(amp) <= threshold)
    if hit.size == 0:
        raise ExtinctionUnreachable(target, float(np.min(np.abs(amp))), field * times[-1])
    j = int(hit[0])
    if j == 0:
        return 0.0
    lo, hi = times[j - 1], times[j]
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if g(stark_echo_amplitude(field * mid, stark_k, sk)) <= 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# population recovery and line shapes


def double_exp_recovery(t_wait, a_inf, a_short, t1_short, a_long, t1_long):
    """a_inf - a_short exp(-t/T1_short) - a_long exp(-t/T1_long)."""
    _check(np.asarray(t1_short) > 0, "t1_short must be > 0")
    _check(np.asarray(t1_long) > 0, "t1_long must be > 0")
    t = np.asarray(t_wait, dtype=float)
    out = a_inf - a_short * np.exp(-t / t1_short) - a_long * np.exp(-t / t1_long)
    return float(out) if out.ndim == 0 else out


def lorentzian(x, center, fwhm, amplitude, offset=0.0):
    """Peak of height ``amplitude`` above ``offset`` with full width ``fwhm``."""
    _check(np.asarray(fwhm) > 0, "fwhm must be > 0")
    x = np.asarray(x, dtype=float)
    hw2 = (0.5 * fwhm) ** 2
    out = offset + amplitude * hw2 / ((x - center) ** 2 + hw2)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# optical depth and efficiency


class EfficiencyForm(str, enum.Enum):
    SMALL_OD = "small_od"  # (OD/4)^2
    EXACT = "exact"  # (e^{OD/2} - e^{-OD/2})^2


@dataclass(frozen=True)
class EchoEfficiency:
    od: float
    small_od: float
    exact: float

    def value(self, form=EfficiencyForm.SMALL_OD) -> float:
        return self.exact if EfficiencyForm(form) is EfficiencyForm.EXACT else self.small_od

    def __float__(self) -> float:
        return self.small_od

    @property
    def ratio(self) -> float:
        """exact / small_od; tends to 16 as OD -> 0."""
        return self.exact / self.small_od if self.small_od else float("nan")


def echo_efficiency_from_od(od: float) -> EchoEfficiency:
    """Both echo-efficiency expressions for an optical depth.

    The two printed forms are not equal (the exact side is ~OD^2, the
    approximation (OD/4)^2); both are returned and ``float()`` gives the
    approximation.
    """
    if not od >= 0:
        raise DomainError("od must be >= 0")
    exact = (2.0 * math.sinh(0.5 * od)) ** 2
    return EchoEfficiency(float(od), (od / 4.0) ** 2, exact)


def od_from_efficiency(eta: float, form=EfficiencyForm.SMALL_OD) -> float:
    if not 0 <= eta < 1:
        raise DomainError("eta must lie in [0, 1)")
    if EfficiencyForm(form) is EfficiencyForm.EXACT:
        return 2.0 * math.asinh(0.5 * math.sqrt(eta))
    return 4.0 * math.sqrt(eta)


@dataclass(frozen=True)
class MemoryMetrics:
    ensemble_storage_time: float
    ensemble_bandwidth: float
    single_ion_bandwidth_raw: float
    single_ion_bandwidth: float
    radiative_linewidth: float
    purcell_factor: float | None
    efficiency: EchoEfficiency


def memory_metrics(spec: EnsembleSpec, od: float, purcell_factor: float | None = None) -> MemoryMetrics:
    """Scalar memory figures of merit for an ensemble.

    Storage is bounded by the optical T2, the ensemble bandwidth is the
    inhomogeneous FWHM and the single-ion bandwidth scale is 1/T1_opt,
    optionally multiplied by a Purcell factor.
    """
    ensure_valid(spec, "EnsembleSpec")
    raw = 1.0 / spec.t1_optical
    fp = 1.0 if purcell_factor is None else float(purcell_factor)
    return MemoryMetrics(
        ensemble_storage_time=spec.t2_optical,
        ensemble_bandwidth=spec.line.fwhm,
        single_ion_bandwidth_raw=raw,
        single_ion_bandwidth=fp * raw,
        radiative_linewidth=fp / (2.0 * math.pi * spec.t1_optical),
        purcell_factor=purcell_factor,
        efficiency=echo_efficiency_from_od(od),
    )
