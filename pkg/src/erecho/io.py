"""Plain-text dataset files.

Grammar (UTF-8, LF line endings)::

    file    := comment* header row*
    comment := "#" " "? key ":" " " value        (metadata)
             | "#" anything                      (ignored)
    header  := column ("," " "? column)*          column := name "(" unit ")"
    row     := number ("," " "? number)*

The first non-comment line is the header.  Columns are abscissa, ordinate
and an optional ``sigma`` column; extra columns are ignored on read.  Unit
tags must be known to :mod:`erecho.units` or be dimensionless labels; times,
frequencies and fields are converted to SI when read.  Metadata values are
JSON when they parse as JSON, otherwise plain text.  Numbers are written as
``%.17e`` so files round-trip exactly.

Reserved metadata keys: ``label``, ``x_scale`` (``linear`` or ``log``) and
``markers`` (a JSON list of ``[name, time]`` pairs for echo traces).
"""
from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

from .core import SweepCurve
from .units import UnitError, convert_array, dimension, si_unit

__all__ = ["DatasetError", "format_dataset", "parse_dataset", "read_dataset",
           "write_dataset", "trace_to_curve"]

_COLUMN = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_.\-]*)\s*\(([^()]*(?:\([^()]*\)[^()]*)*)\)\s*$")
_META = re.compile(r"^#\s?([A-Za-z_][A-Za-z0-9_]*):\s?(.*)$")


class DatasetError(ValueError):
    """Malformed dataset text; messages carry the 1-based line number."""


def _meta_text(value) -> str:
    if isinstance(value, str):
        try:
            json.loads(value)
        except ValueError:
            return value
        # a string that would read back as JSON is quoted to stay a string
        return json.dumps(value)
    return json.dumps(value, sort_keys=True, allow_nan=True)


def _meta_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def format_dataset(curve: SweepCurve) -> str:
    """Serialise a curve to the dataset text format."""
    lines = []
    meta = dict(curve.meta)
    if curve.label:
        meta["label"] = curve.label
    for key in sorted(meta):
        text = _meta_text(meta[key])
        if "\n" in text:
            raise DatasetError(f"metadata {key!r} must be a single line")
        lines.append(f"# {key}: {text}")
    cols = [f"{curve.x_name}({curve.x_unit})", f"{curve.y_name}({curve.y_unit})"]
    data = [curve.abscissa, curve.ordinate]
    if curve.sigma is not None:
        cols.append(f"sigma({curve.y_unit})")
        data.append(curve.sigma)
    lines.append(", ".join(cols))
    for row in zip(*data):
        lines.append(", ".join(f"{v:.17e}" for v in row))
    return "\n".join(lines) + "\n"


def _to_si(values: np.ndarray, unit: str) -> tuple[np.ndarray, str]:
    try:
        target = si_unit(unit)
        dim = dimension(unit)
    except UnitError:
        # free-form ordinate labels pass through untouched
        return values, unit
    if target == unit or dim == "dimensionless":
        return values, unit
    return convert_array(values, unit, target), target


def parse_dataset(text: str, source: str = "<string>") -> SweepCurve:
    """Parse dataset text; abscissa and ordinate are converted to SI."""
    meta: dict = {}
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _META.match(line)
            if m and header is None:
                meta[m.group(1)] = _meta_value(m.group(2))
            continue
        fields = [f.strip() for f in line.split(",")]
        if header is None:
            header = []
            for f in fields:
                m = _COLUMN.match(f)
                if not m:
                    raise DatasetError(
                        f"{source}:{lineno}: header column {f!r} is not of the form name(unit)")
                header.append((m.group(1), m.group(2).strip()))
            if len(header) < 2:
                raise DatasetError(f"{source}:{lineno}: need at least two columns")
            continue
        if len(fields) != len(header):
            raise DatasetError(
                f"{source}:{lineno}: expected {len(header)} values, got {len(fields)}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise DatasetError(f"{source}:{lineno}: {exc}") from None
    if header is None:
        raise DatasetError(f"{source}: no header line")
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    (xn, xu), (yn, yu) = header[0], header[1]
    try:
        x, xu_si = _to_si(arr[:, 0], xu)
        y, yu_si = _to_si(arr[:, 1], yu)
    except UnitError as exc:
        raise DatasetError(f"{source}: {exc}") from None
    sigma = None
    names = [h[0] for h in header]
    if "sigma" in names[2:]:
        j = names.index("sigma", 2)
        sigma = arr[:, j]
        su = header[j][1]
        if su != yu_si:
            try:
                sigma = convert_array(sigma, su, yu_si)
            except UnitError as exc:
                raise DatasetError(f"{source}: sigma column: {exc}") from None
    label = meta.pop("label", "")
    return SweepCurve(x, y, sigma=sigma, x_unit=xu_si, y_unit=yu_si, label=str(label),
                      x_name=xn, y_name=yn, meta=meta)


def read_dataset(path) -> SweepCurve:
    path = Path(path)
    return parse_dataset(path.read_text(encoding="utf-8"), str(path))


def write_dataset(curve: SweepCurve, path) -> Path:
    path = Path(path)
    path.write_bytes(format_dataset(curve).encode("utf-8"))
    return path


def trace_to_curve(trace, label: str = "echo trace") -> SweepCurve:
    """Detector-window intensity as a curve; markers go into the metadata."""
    markers = [[name, float(t)] for name, t in trace.markers if math.isfinite(t)]
    return SweepCurve(trace.times, trace.intensity, x_unit="s", y_unit="a.u.", label=label,
                      x_name="time", y_name="intensity",
                      meta={"kind": "trace", "markers": markers, "n_ions": int(trace.n_ions)})
