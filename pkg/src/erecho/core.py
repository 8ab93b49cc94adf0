"""Domain records shared by the simulator, the analytic layer and the fitter.

All records are frozen dataclasses holding SI values.  Constructors do not
reject bad values; :func:`validate` reports them and :func:`ensure_valid`
turns a non-empty report into a :class:`ValidationError`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
from scipy import special

__all__ = [
    "ValidationError",
    "LineShape",
    "DipoleKernel",
    "PulseArea",
    "InhomogeneousLine",
    "SuddenJumpBath",
    "ShfModulation",
    "EnsembleSpec",
    "DephasingParams",
    "OpticalPulse",
    "StarkGate",
    "Detect",
    "PulseSequence",
    "SweepCurve",
    "FitResult",
    "validate",
    "ensure_valid",
]


class ValidationError(ValueError):
    """A record failed validation; ``violations`` lists every problem."""

    def __init__(self, violations: Sequence[str], what: str = "value"):
        self.violations = list(violations)
        super().__init__(f"invalid {what}: " + "; ".join(self.violations))


class LineShape(str, enum.Enum):
    LORENTZIAN = "lorentzian"
    GAUSSIAN = "gaussian"


class PulseArea(str, enum.Enum):
    HALF_PI = "half_pi"
    PI = "pi"
    SATURATION = "saturation"


class DipoleKernel(str, enum.Enum):
    """Orientation weight w(theta) of the Stark-shift projection cos(theta).

    SIN4 is the out-of-plane field geometry, COS4 the in-plane on-chip
    electrode geometry, ISOTROPIC a uniform distribution on the sphere.
    """

    SIN4 = "sin4"
    COS4 = "cos4"
    ISOTROPIC = "isotropic"

    def weight(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self is DipoleKernel.SIN4:
            return np.sin(theta) ** 4
        if self is DipoleKernel.COS4:
            return np.cos(theta) ** 4
        return np.sin(theta)

    @property
    def normalization(self) -> float:
        """Closed-form integral of the weight over [0, pi/2]."""
        if self is DipoleKernel.ISOTROPIC:
            return 1.0
        return 3.0 * math.pi / 16.0

    def cdf(self, theta):
        """Normalised cumulative weight on [0, pi/2]."""
        t = np.asarray(theta, dtype=float)
        if self is DipoleKernel.SIN4:
            raw = 3 * t / 8 - np.sin(2 * t) / 4 + np.sin(4 * t) / 32
        elif self is DipoleKernel.COS4:
            raw = 3 * t / 8 + np.sin(2 * t) / 4 + np.sin(4 * t) / 32
        else:
            raw = 1.0 - np.cos(t)
        return raw / self.normalization

    def sample(self, u) -> np.ndarray:
        """Map uniforms in [0, 1) to angles in [0, pi/2] by inverting the CDF."""
        u = np.asarray(u, dtype=float)
        if self is DipoleKernel.ISOTROPIC:
            return np.arccos(1.0 - u)
        lo = np.zeros_like(u)
        hi = np.full_like(u, math.pi / 2)
        # cdf is strictly increasing; 60 halvings reach double precision
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class InhomogeneousLine:
    """Static distribution of transition frequencies.

    ``fwhm`` is the full width at half maximum in Hz.  Lorentzian sampling is
    truncated at ``truncation`` FWHM on either side of the centre.
    """

    center_frequency: float = 0.0
    fwhm: float = 36e9
    shape: LineShape = LineShape.LORENTZIAN
    truncation: float = 50.0

    def _cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.center_frequency) / self.fwhm
        if self.shape is LineShape.LORENTZIAN:
            return 0.5 + np.arctan(2.0 * z) / math.pi
        sigma = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        return special.ndtr(z / sigma)

    def _icdf(self, p):
        p = np.asarray(p, dtype=float)
        if self.shape is LineShape.LORENTZIAN:
            z = 0.5 * np.tan(math.pi * (p - 0.5))
        else:
            sigma = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
            z = sigma * special.ndtri(p)
        return self.center_frequency + self.fwhm * z

    @property
    def support(self) -> tuple[float, float]:
        half = self.truncation * self.fwhm
        return self.center_frequency - half, self.center_frequency + half

    def mass(self, lo: float, hi: float) -> float:
        """Probability of the truncated line inside [lo, hi]."""
        s_lo, s_hi = self.support
        lo, hi = max(lo, s_lo), min(hi, s_hi)
        if hi <= lo:
            return 0.0
        total = self._cdf(s_hi) - self._cdf(s_lo)
        return float((self._cdf(hi) - self._cdf(lo)) / total)

    def sample(self, u, lo: float | None = None, hi: float | None = None) -> np.ndarray:
        """Inverse-CDF sampling, optionally conditioned on [lo, hi]."""
        s_lo, s_hi = self.support
        lo = s_lo if lo is None else max(lo, s_lo)
        hi = s_hi if hi is None else min(hi, s_hi)
        c_lo, c_hi = self._cdf(lo), self._cdf(hi)
        x = self._icdf(c_lo + np.asarray(u, dtype=float) * (c_hi - c_lo))
        return np.clip(x, lo, hi)


@dataclass(frozen=True)
class SuddenJumpBath:
    """Paramagnetic bath: Poisson flips at ``flip_rate`` (Hz) producing
    Lorentzian frequency jumps of FWHM ``max_shift`` (Hz).  The TLS terms are
    carried for the analytic layer only."""

    flip_rate: float
    max_shift: float
    tls_rate: float = 0.0
    tls_t0: float = 1e-4


@dataclass(frozen=True)
class ShfModulation:
    depth: float
    frequency: float


@dataclass(frozen=True)
class EnsembleSpec:
    line: InhomogeneousLine
    t1_optical: float
    t2_optical: float
    stretch_x: float = 1.0
    spin_t1_short: float = 9.4e-3
    spin_t1_long: float = 0.53
    short_fraction: float = 0.5
    stark_k: float = 0.0
    dipole_kernel: DipoleKernel = DipoleKernel.SIN4
    shf_modulation: ShfModulation | None = None
    bath: SuddenJumpBath | None = None


@dataclass(frozen=True)
class DephasingParams:
    """Parameters of the spectral-diffusion linewidth law (all Hz, t0 in s)."""

    gamma0: float
    gamma_sd: float
    rate_r: float
    gamma_tls: float
    t0: float = 1e-4

    @classmethod
    def from_bath(cls, gamma0: float, bath: SuddenJumpBath) -> "DephasingParams":
        return cls(gamma0, bath.max_shift, bath.flip_rate, bath.tls_rate, bath.tls_t0)


@dataclass(frozen=True)
class OpticalPulse:
    start: float
    duration: float
    area: PulseArea = PulseArea.PI
    power_scale: float = 1.0

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def center(self) -> float:
        return self.start + 0.5 * self.duration

    @property
    def rotation_angle(self) -> float:
        """Nutation angle; Rabi frequency goes as sqrt(power)."""
        nominal = {PulseArea.HALF_PI: math.pi / 2, PulseArea.PI: math.pi}.get(self.area, 0.0)
        return nominal * math.sqrt(max(self.power_scale, 0.0))


@dataclass(frozen=True)
class StarkGate:
    start: float
    duration: float
    field: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class Detect:
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


Event = Union[OpticalPulse, StarkGate, Detect]


@dataclass(frozen=True)
class PulseSequence:
    events: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def optical(self) -> list[OpticalPulse]:
        return [e for e in self.events if isinstance(e, OpticalPulse)]

    @property
    def gates(self) -> list[StarkGate]:
        return [e for e in self.events if isinstance(e, StarkGate)]

    @property
    def detects(self) -> list[Detect]:
        return [e for e in self.events if isinstance(e, Detect)]

    @property
    def end(self) -> float:
        return max((e.end for e in self.events), default=0.0)

    def stark_integral(self, t_a: float, t_b: float) -> float:
        """Integral of the applied field over [t_a, t_b] (V s / m)."""
        total = 0.0
        for g in self.gates:
            overlap = min(t_b, g.end) - max(t_a, g.start)
            if overlap > 0:
                total += g.field * overlap
        return total


def _readonly(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SweepCurve:
    """One-dimensional dataset: ordinate versus abscissa, SI unless tagged."""

    abscissa: np.ndarray
    ordinate: np.ndarray
    sigma: np.ndarray | None = None
    x_unit: str = "s"
    y_unit: str = "1"
    label: str = ""
    x_name: str = "x"
    y_name: str = "y"
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "abscissa", _readonly(self.abscissa))
        object.__setattr__(self, "ordinate", _readonly(self.ordinate))
        if self.sigma is not None:
            object.__setattr__(self, "sigma", _readonly(self.sigma))
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self) -> int:
        return len(self.abscissa)

    def scaled(self, c: float) -> "SweepCurve":
        sig = None if self.sigma is None else self.sigma * abs(c)
        return self.replace(ordinate=self.ordinate * c, sigma=sig)

    def replace(self, **changes) -> "SweepCurve":
        kw = dict(abscissa=self.abscissa, ordinate=self.ordinate, sigma=self.sigma,
                  x_unit=self.x_unit, y_unit=self.y_unit, label=self.label,
                  x_name=self.x_name, y_name=self.y_name, meta=self.meta)
        kw.update(changes)
        return SweepCurve(**kw)


@dataclass(frozen=True)
class FitResult:
    model_id: str
    params: dict
    covariance: np.ndarray
    residual_norm: float
    n_points: int
    converged: bool
    param_names: tuple = ()
    message: str = ""
    metadata: dict = field(default_factory=dict)

    @property
    def stderr(self) -> dict:
        var = np.diag(self.covariance)
        return {n: float(np.sqrt(v)) if v >= 0 else float("nan")
                for n, v in zip(self.param_names, var)}

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "param_names": list(self.param_names),
            "params": {k: float(v) for k, v in self.params.items()},
            "stderr": self.stderr,
            "covariance": np.asarray(self.covariance, dtype=float).tolist(),
            "residual_norm": float(self.residual_norm),
            "n_points": int(self.n_points),
            "converged": bool(self.converged),
            "message": self.message,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FitResult":
        return cls(
            model_id=d["model_id"],
            params=dict(d["params"]),
            covariance=np.asarray(d["covariance"], dtype=float),
            residual_norm=float(d["residual_norm"]),
            n_points=int(d["n_points"]),
            converged=bool(d["converged"]),
            param_names=tuple(d.get("param_names", d["params"].keys())),
            message=d.get("message", ""),
            metadata=dict(d.get("metadata", {})),
        )


# --------------------------------------------------------------------------
# validation


def _positive(report, name, value):
    if not _finite(value) or value <= 0:
        report.append(f"{name} must be > 0 (got {value!r})")


def _nonneg(report, name, value):
    if not _finite(value) or value < 0:
        report.append(f"{name} must be >= 0 (got {value!r})")


def _finite(value) -> bool:
    try:
        return math.isfinite(float(value))
    except (TypeError, ValueError):
        return False


def _validate_line(line, report, prefix="line."):
    if not isinstance(line, InhomogeneousLine):
        report.append(f"{prefix[:-1]} must be an InhomogeneousLine")
        return
    _positive(report, prefix + "fwhm", line.fwhm)
    _positive(report, prefix + "truncation", line.truncation)
    if not _finite(line.center_frequency):
        report.append(f"{prefix}center_frequency must be finite")
    try:
        LineShape(line.shape)
    except ValueError:
        report.append(f"{prefix}shape must be one of {[s.value for s in LineShape]}")


def _validate_bath(bath, report, prefix="bath."):
    _nonneg(report, prefix + "flip_rate", bath.flip_rate)
    _nonneg(report, prefix + "max_shift", bath.max_shift)
    _nonneg(report, prefix + "tls_rate", bath.tls_rate)
    _positive(report, prefix + "tls_t0", bath.tls_t0)


def _validate_ensemble(spec: EnsembleSpec, report):
    _validate_line(spec.line, report)
    _positive(report, "t1_optical", spec.t1_optical)
    # t2 may be infinite (no homogeneous dephasing)
    if not (isinstance(spec.t2_optical, (int, float)) and spec.t2_optical > 0):
        report.append(f"t2_optical must be > 0 (got {spec.t2_optical!r})")
    if not _finite(spec.stretch_x) or spec.stretch_x < 1:
        report.append(f"stretch_x must be >= 1 (got {spec.stretch_x!r})")
    _positive(report, "spin_t1_short", spec.spin_t1_short)
    _positive(report, "spin_t1_long", spec.spin_t1_long)
    if not _finite(spec.short_fraction) or not 0 <= spec.short_fraction <= 1:
        report.append(f"short_fraction must lie in [0, 1] (got {spec.short_fraction!r})")
    _nonneg(report, "stark_k", spec.stark_k)
    try:
        DipoleKernel(spec.dipole_kernel)
    except ValueError:
        report.append(f"dipole_kernel must be one of {[k.value for k in DipoleKernel]}")
    if spec.shf_modulation is not None:
        m = spec.shf_modulation
        if not _finite(m.depth) or not 0 <= m.depth <= 1:
            report.append(f"shf_modulation.depth must lie in [0, 1] (got {m.depth!r})")
        _nonneg(report, "shf_modulation.frequency", m.frequency)
    if spec.bath is not None:
        _validate_bath(spec.bath, report)


def _validate_params(p: DephasingParams, report):
    _nonneg(report, "gamma0", p.gamma0)
    _nonneg(report, "gamma_sd", p.gamma_sd)
    _nonneg(report, "rate_r", p.rate_r)
    _nonneg(report, "gamma_tls", p.gamma_tls)
    _positive(report, "t0", p.t0)


def _overlaps(a, b) -> bool:
    return a.start < b.end and b.start < a.end


def _validate_sequence(seq: PulseSequence, report):
    events = list(seq.events)
    for i, e in enumerate(events):
        if not isinstance(e, (OpticalPulse, StarkGate, Detect)):
            report.append(f"event {i} has unsupported type {type(e).__name__}")
            return
        if not _finite(e.start) or e.start < 0:
            report.append(f"event {i} start must be finite and >= 0 (got {e.start!r})")
        if not _finite(e.duration) or e.duration < 0:
            report.append(f"event {i} duration must be finite and >= 0 (got {e.duration!r})")
        if isinstance(e, OpticalPulse):
            try:
                PulseArea(e.area)
            except ValueError:
                report.append(f"event {i} has unknown pulse area {e.area!r}")
            if not _finite(e.power_scale) or e.power_scale < 0:
                report.append(f"event {i} power_scale must be >= 0")
        if isinstance(e, StarkGate) and not _finite(e.field):
            report.append(f"event {i} field must be finite")
    if report:
        return
    starts = [e.start for e in events]
    if any(b < a for a, b in zip(starts, starts[1:])):
        report.append("events must be sorted by start time")
    optical = [(i, e) for i, e in enumerate(events) if isinstance(e, OpticalPulse)]
    for k, (i, a) in enumerate(optical):
        for j, b in optical[k + 1:]:
            if _overlaps(a, b):
                report.append(f"optical pulses {i} and {j} overlap")
    for i, e in enumerate(events):
        if isinstance(e, (Detect, StarkGate)):
            kind = "detection window" if isinstance(e, Detect) else "Stark gate"
            for j, p in optical:
                if _overlaps(e, p):
                    report.append(f"{kind} {i} overlaps optical pulse {j}")


def _validate_curve(c: SweepCurve, report):
    n = len(c.abscissa)
    if c.abscissa.ndim != 1 or c.ordinate.ndim != 1:
        report.append("abscissa and ordinate must be one-dimensional")
        return
    if len(c.ordinate) != n:
        report.append(f"abscissa has {n} points but ordinate has {len(c.ordinate)}")
    if c.sigma is not None:
        if len(c.sigma) != n:
            report.append("sigma length differs from abscissa")
        elif np.any(~(c.sigma > 0)):
            report.append("sigma entries must be > 0")
    for name, arr in (("abscissa", c.abscissa), ("ordinate", c.ordinate)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            report.append(f"{name} has non-finite value at index {int(bad[0])}")


def validate(obj) -> list[str]:
    """List every violated invariant of ``obj``; empty means well-formed.

    Never raises.
    """
    report: list[str] = []
    try:
        if isinstance(obj, EnsembleSpec):
            _validate_ensemble(obj, report)
        elif isinstance(obj, PulseSequence):
            _validate_sequence(obj, report)
        elif isinstance(obj, DephasingParams):
            _validate_params(obj, report)
        elif isinstance(obj, InhomogeneousLine):
            _validate_line(obj, report, prefix="")
        elif isinstance(obj, SuddenJumpBath):
            _validate_bath(obj, report, prefix="")
        elif isinstance(obj, SweepCurve):
            _validate_curve(obj, report)
        else:
            report.append(f"cannot validate object of type {type(obj).__name__}")
    except Exception as exc:  # reporting must stay total
        report.append(f"validation failed: {exc!r}")
    return report


def ensure_valid(obj, what: str | None = None):
    report = validate(obj)
    if report:
        raise ValidationError(report, what or type(obj).__name__)
    return obj
