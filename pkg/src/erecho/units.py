"""Unit tags and exact scale-factor conversion.

Everything inside the package is SI (s, Hz, T, V/m, K, m).  The lab units
used when reading or writing data (us, kHz, mT, V/cm, mK, nm ...) are
converted at the boundary with :func:`convert`.

Frequencies are ordinary (cycles per second) unless a name says otherwise;
the linewidth formulas in :mod:`erecho.analytic` all use ordinary frequency.
"""
from __future__ import annotations

import re
from fractions import Fraction

import numpy as np

__all__ = [
    "UnitError",
    "UNITS",
    "dimension",
    "convert",
    "convert_array",
    "to_si",
    "from_si",
    "parse_quantity",
    "si_unit",
]


class UnitError(ValueError):
    """Raised for unknown unit tags or dimensionally incompatible pairs."""


_F = Fraction

# tag -> (dimension, factor to SI as an exact rational)
UNITS: dict[str, tuple[str, Fraction]] = {
    # time
    "s": ("time", _F(1)),
    "ms": ("time", _F(1, 10**3)),
    "us": ("time", _F(1, 10**6)),
    "ns": ("time", _F(1, 10**9)),
    "ps": ("time", _F(1, 10**12)),
    # ordinary frequency
    "Hz": ("frequency", _F(1)),
    "kHz": ("frequency", _F(10**3)),
    "MHz": ("frequency", _F(10**6)),
    "GHz": ("frequency", _F(10**9)),
    "THz": ("frequency", _F(10**12)),
    # angular frequency is kept as its own dimension so it never silently
    # mixes with ordinary frequency
    "rad/s": ("angular_frequency", _F(1)),
    # magnetic field
    "T": ("magnetic_field", _F(1)),
    "mT": ("magnetic_field", _F(1, 10**3)),
    "G": ("magnetic_field", _F(1, 10**4)),
    # electric field
    "V/m": ("electric_field", _F(1)),
    "V/cm": ("electric_field", _F(100)),
    "V/mm": ("electric_field", _F(1000)),
    "kV/cm": ("electric_field", _F(10**5)),
    # temperature
    "K": ("temperature", _F(1)),
    "mK": ("temperature", _F(1, 10**3)),
    # length
    "m": ("length", _F(1)),
    "cm": ("length", _F(1, 100)),
    "mm": ("length", _F(1, 10**3)),
    "um": ("length", _F(1, 10**6)),
    "nm": ("length", _F(1, 10**9)),
    # voltage
    "V": ("voltage", _F(1)),
    "mV": ("voltage", _F(1, 10**3)),
    # Stark coefficient: frequency shift per unit field
    "Hz/(V/m)": ("stark_coefficient", _F(1)),
    "Hz/(V/cm)": ("stark_coefficient", _F(1, 100)),
    "kHz/(V/cm)": ("stark_coefficient", _F(10**3, 100)),
    "MHz/(V/cm)": ("stark_coefficient", _F(10**6, 100)),
    # Stark pulse area: field x time
    "V*s/m": ("stark_area", _F(1)),
    "V*us/cm": ("stark_area", _F(100, 10**6)),
    "V*ns/cm": ("stark_area", _F(100, 10**9)),
    # broadening rate vs temperature
    "Hz/K": ("frequency_per_temperature", _F(1)),
    "kHz/K": ("frequency_per_temperature", _F(10**3)),
    # rates per length (absorption coefficient)
    "1/m": ("inverse_length", _F(1)),
    "1/cm": ("inverse_length", _F(100)),
    # dimensionless ordinates
    "1": ("dimensionless", _F(1)),
    "counts": ("dimensionless", _F(1)),
    "a.u.": ("dimensionless", _F(1)),
    "%": ("dimensionless", _F(1, 100)),
    "ppm": ("dimensionless", _F(1, 10**6)),
    "rad": ("dimensionless", _F(1)),
}

_SI = {
    "time": "s",
    "frequency": "Hz",
    "angular_frequency": "rad/s",
    "magnetic_field": "T",
    "electric_field": "V/m",
    "temperature": "K",
    "length": "m",
    "voltage": "V",
    "stark_coefficient": "Hz/(V/m)",
    "stark_area": "V*s/m",
    "frequency_per_temperature": "Hz/K",
    "inverse_length": "1/m",
    "dimensionless": "1",
}

_ALIASES = {
    "µs": "us", "μs": "us", "sec": "s",
    "µm": "um", "μm": "um",
    "V·s/m": "V*s/m", "V·µs/cm": "V*us/cm", "V·us/cm": "V*us/cm",
    "V*µs/cm": "V*us/cm", "V*μs/cm": "V*us/cm", "V.us/cm": "V*us/cm",
    "V/(cm*us)": "V*us/cm", "V/(cm·µs)": "V*us/cm",
    "kHz/V/cm": "kHz/(V/cm)", "Hz/V/m": "Hz/(V/m)", "Hz/V/cm": "Hz/(V/cm)",
    "au": "a.u.", "arb": "a.u.", "": "1", "-": "1",
}


def _canonical(tag: str) -> str:
    tag = tag.strip()
    if tag in UNITS:
        return tag
    alias = _ALIASES.get(tag)
    if alias is None:
        raise UnitError(f"unknown unit tag {tag!r}")
    return alias


def dimension(tag: str) -> str:
    """Return the dimension name of a unit tag."""
    return UNITS[_canonical(tag)][0]


def si_unit(tag: str) -> str:
    """SI unit tag sharing the dimension of ``tag``."""
    return _SI[dimension(tag)]


def _ratio(from_unit: str, to_unit: str) -> Fraction:
    a, b = _canonical(from_unit), _canonical(to_unit)
    da, fa = UNITS[a]
    db, fb = UNITS[b]
    if da != db:
        raise UnitError(
            f"cannot convert {from_unit!r} ({da}) to {to_unit!r} ({db})")
    return fa / fb


def convert(value: float, from_unit: str, to_unit: str) -> float:
    """Convert a scalar between dimensionally compatible units.

    The product is formed in exact rational arithmetic and rounded once, so
    ``convert(convert(v, a, b), b, a)`` is within one ULP of ``v``.
    """
    r = _ratio(from_unit, to_unit)
    if r == 1:
        return float(value)
    v = float(value)
    if not np.isfinite(v):
        return v * float(r)
    return float(Fraction(v) * r)


def convert_array(values, from_unit: str, to_unit: str) -> np.ndarray:
    """Vectorised :func:`convert` (elementwise exact rounding)."""
    r = _ratio(from_unit, to_unit)
    arr = np.asarray(values, dtype=float)
    if r == 1:
        return arr.copy()
    out = np.empty_like(arr)
    flat_in, flat_out = arr.ravel(), out.ravel()
    for i, v in enumerate(flat_in):
        flat_out[i] = float(Fraction(float(v)) * r) if np.isfinite(v) else v * float(r)
    return out


def to_si(value: float, unit: str) -> float:
    return convert(value, unit, si_unit(unit))


def from_si(value: float, unit: str) -> float:
    return convert(value, si_unit(unit), unit)


_QTY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*?)\s*$")


def parse_quantity(text, default_unit: str | None = None) -> float:
    """Parse ``"64.1 us"`` (or a bare number) into SI.

    Bare numbers are taken to be in ``default_unit`` when given, else SI.
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return to_si(float(text), default_unit) if default_unit else float(text)
    m = _QTY.match(str(text))
    if not m:
        raise UnitError(f"cannot parse quantity {text!r}")
    number, unit = float(m.group(1)), m.group(2)
    if not unit:
        return to_si(number, default_unit) if default_unit else number
    if default_unit is not None and dimension(unit) != dimension(default_unit):
        raise UnitError(
            f"quantity {text!r} has unit {unit!r}, expected a {dimension(default_unit)}")
    return to_si(number, unit)
