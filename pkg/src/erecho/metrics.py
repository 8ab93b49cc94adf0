"""Quantum-memory projections from fitted ensemble parameters.

Optical-depth scaling with device geometry, Stark-echo-silencing (SEMM)
feasibility and a capability summary comparing single-ion and ensemble
memories.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

from .analytic import (
    EfficiencyForm,
    ExtinctionUnreachable,
    echo_efficiency_from_od,
    stark_extinction_time,
)
from .core import DipoleKernel, EnsembleSpec, ValidationError, validate

__all__ = [
    "DeviceGeometry",
    "MEASURED_DEVICE",
    "TARGET_DEVICE",
    "ON_CHIP_ELECTRODES",
    "scale_od",
    "SemmReport",
    "semm_feasibility",
    "CapabilityReport",
    "capability_report",
    "format_si",
]


@dataclass(frozen=True)
class DeviceGeometry:
    """Waveguide device geometry (SI units; density in ppm)."""

    doped_thickness: float
    er_density_ppm: float
    waveguide_length: float
    electrode_gap: float
    applied_voltage: float

    def violations(self) -> list[str]:
        return [f"{k} must be > 0 (got {v!r})" for k, v in asdict(self).items()
                if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0)]

    def check(self):
        report = self.violations()
        if report:
            raise ValidationError(report, "DeviceGeometry")

    @property
    def field(self) -> float:
        """Uniform-field estimate V / gap in V/m."""
        return self.applied_voltage / self.electrode_gap


# 50 nm doped layer, 50 ppm, 0.486 cm spiral, 2.5 mm electrodes at 40 V/cm
MEASURED_DEVICE = DeviceGeometry(50e-9, 50.0, 0.486e-2, 2.5e-3, 10.0)
# 3x density, 120 nm layer, 5 cm waveguide
TARGET_DEVICE = DeviceGeometry(120e-9, 150.0, 5e-2, 2.5e-3, 10.0)
# on-chip electrodes 0.2 mm apart at 500 V/cm
ON_CHIP_ELECTRODES = DeviceGeometry(50e-9, 50.0, 0.486e-2, 0.2e-3, 10.0)


def scale_od(base_od: float, base: DeviceGeometry, target: DeviceGeometry) -> float:
    """Optical depth scaled linearly in density, doped thickness and length.

    Linear scaling in thickness treats the mode overlap as proportional to
    the doped-layer thickness, which overstates thick layers somewhat.
    """
    base.check()
    target.check()
    if not base_od >= 0:
        raise ValueError("base_od must be >= 0")
    return (base_od
            * (target.er_density_ppm / base.er_density_ppm)
            * (target.doped_thickness / base.doped_thickness)
            * (target.waveguide_length / base.waveguide_length))


@dataclass(frozen=True)
class SemmReport:
    field: float
    extinction_time: float
    recalls_within_T2: int
    kernel: str
    target: float

    def to_dict(self) -> dict:
        return asdict(self)


def semm_feasibility(spec: EnsembleSpec, geom: DeviceGeometry, kernel=None,
                     target: float = 1.0) -> SemmReport:
    """Stark-pulse length needed to silence the echo, and recall budget.

    ``recalls_within_T2`` = floor(T2 / (2 t_ext)): a coarse count of
    silence/recall cycles that fit in the optical coherence time.
    """
    geom.check()
    kern = DipoleKernel(spec.dipole_kernel if kernel is None else kernel)
    field = geom.field
    t_ext = float(stark_extinction_time(field, spec.stark_k, kern, target))
    recalls = int(math.floor(spec.t2_optical / (2.0 * t_ext))) if t_ext > 0 else 0
    return SemmReport(field, t_ext, recalls, kern.value, float(target))


def format_si(value: float | None, unit: str, digits: int = 2) -> str:
    """Engineering notation, e.g. 6.41e-5 s -> '64 µs'."""
    if value is None or not math.isfinite(value):
        return "n/a"
    if value == 0:
        return f"0 {unit}"
    prefixes = [(1e9, "G"), (1e6, "M"), (1e3, "k"), (1.0, ""), (1e-3, "m"),
                (1e-6, "µ"), (1e-9, "n"), (1e-12, "p")]
    for scale, p in prefixes:
        if abs(value) >= scale:
            break
    v = value / scale
    mag = math.floor(math.log10(abs(v)))
    v = round(v, max(digits - 1 - mag, 0))
    text = f"{v:.{max(digits - 1 - mag, 0)}f}"
    return f"{text} {p}{unit}"


@dataclass
class CapabilityReport:
    """Table of single-ion versus ensemble memory figures."""

    rows: list = field(default_factory=list)  # (metric, single_ion, ensemble)
    values: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def row(self, metric: str) -> tuple | None:
        for r in self.rows:
            if r[0] == metric:
                return r
        return None

    def table(self) -> str:
        if not self.rows:
            return ""
        w0 = max(len(r[0]) for r in self.rows)
        w1 = max(len(r[1]) for r in self.rows + [("", "Single ion", "")])
        head = f"{'':<{w0}} | {'Single ion':<{w1}} | Ensemble"
        lines = [head, "-" * len(head)]
        lines += [f"{m:<{w0}} | {s:<{w1}} | {e}" for m, s, e in self.rows]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"rows": [list(r) for r in self.rows], "values": self.values, "notes": self.notes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)


def _safe(fn, default=None):
    try:
        return fn()
    except (ValueError, ZeroDivisionError, OverflowError, ExtinctionUnreachable, TypeError):
        return default


def capability_report(spec: EnsembleSpec, od: float, *, geometry: DeviceGeometry | None = None,
                      target_geometry: DeviceGeometry | None = None,
                      semm_geometry: DeviceGeometry | None = None, semm_kernel=None,
                      purcell_factor: float | None = None,
                      spin_t2: float | None = None) -> CapabilityReport:
    """Capability summary for an ensemble and the matching single-ion case.

    Never raises on degenerate inputs: entries that cannot be computed are
    reported as zero or 'n/a'.  The spin-T2 storage row is a projection and
    only appears when ``spin_t2`` is given.  ``semm_kernel`` overrides the
    dipole kernel for the SEMM row (in-plane on-chip electrodes use cos4).
    """
    rep = CapabilityReport()
    ok = not validate(spec)
    t2 = getattr(spec, "t2_optical", 0.0) or 0.0
    t1 = getattr(spec, "t1_optical", 0.0) or 0.0
    line = getattr(spec, "line", None)
    fwhm = getattr(line, "fwhm", 0.0) or 0.0
    raw_bw = 1.0 / t1 if t1 > 0 else 0.0
    fp = 1.0 if purcell_factor is None else float(purcell_factor)
    eff = _safe(lambda: echo_efficiency_from_od(od))

    v = rep.values
    v["ensemble_storage_time"] = t2 if t2 > 0 and math.isfinite(t2) else 0.0
    v["ensemble_bandwidth"] = fwhm if fwhm > 0 else 0.0
    v["single_ion_bandwidth_raw"] = raw_bw
    v["single_ion_bandwidth"] = fp * raw_bw
    v["purcell_factor"] = purcell_factor
    v["od"] = float(od) if od is not None and od >= 0 else 0.0
    v["efficiency_small_od"] = eff.value(EfficiencyForm.SMALL_OD) if eff else 0.0
    v["efficiency_exact"] = eff.value(EfficiencyForm.EXACT) if eff else 0.0
    v["spin_t2_projection"] = spin_t2

    rep.rows.append(("Memory protocol", "Emissive (Barrett-Kok)", "Absorptive (AFC, ROSE/SEMM)"))
    single_store = (f"High (spin T2, {format_si(spin_t2, 's')}) (projected)"
                    if spin_t2 else "n/a (spin T2 not supplied)")
    ens_store = f"Medium (optical T2, ∼ {format_si(v['ensemble_storage_time'], 's')})"
    rep.rows.append(("Storage time", single_store, ens_store))
    bw_single = f"Narrow (1/optical T1 ∼ {format_si(raw_bw, 'Hz')}"
    if purcell_factor is not None:
        bw_single += f"; x{fp:g} Purcell ∼ {format_si(fp * raw_bw, 'Hz')}"
    bw_single += ")"
    rep.rows.append(("Bandwidth", bw_single, f"High, up to {format_si(fwhm, 'Hz')}"))
    rep.rows.append(("Device geometry", "Nanophotonic cavity",
                     "cm-long waveguide or nanophotonic cavity"))
    rep.rows.append(("Optical depth", "", f"{v['od']:.4g}"))
    rep.rows.append(("Echo efficiency", "",
                     f"{v['efficiency_small_od']:.3g} ((OD/4)^2); "
                     f"{v['efficiency_exact']:.3g} (exact)"))

    if geometry is not None and target_geometry is not None:
        proj = _safe(lambda: scale_od(v["od"], geometry, target_geometry), 0.0)
        v["projected_od"] = proj
        rep.rows.append(("Projected OD", "", f"{proj:.3g}"))
        rep.notes.append("projected OD scales linearly with doped thickness (approximate)")
    if semm_geometry is not None:
        semm = _safe(lambda: semm_feasibility(spec, semm_geometry, semm_kernel)) if ok else None
        v["semm"] = semm.to_dict() if semm else None
        if semm:
            rep.rows.append(("SEMM extinction", "",
                             f"{format_si(semm.extinction_time, 's')} at "
                             f"{semm.field / 100:.4g} V/cm, {semm.recalls_within_T2} recalls within T2"))
        else:
            rep.rows.append(("SEMM extinction", "", "n/a"))
    if purcell_factor is None:
        rep.notes.append("single-ion bandwidth is the raw 1/T1; no Purcell factor applied")
    return rep
