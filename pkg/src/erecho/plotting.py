"""Static SVG plots of datasets with optional fitted-curve overlays.

Output is byte-stable: no timestamps, a fixed SVG id salt, text rendered
as paths, and a provenance comment carrying a hash of the inputs.
"""
from __future__ import annotations

import io
import math
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .core import FitResult, SweepCurve
from .fitting import get_model
from .units import UnitError, dimension, from_si

__all__ = ["PlotError", "display_unit", "render_svg", "plot_curves", "uses_log_x"]

_LOG_NAMES = {"t_wait"}

_DISPLAY = {
    "time": [(1e-6, "ns"), (1e-3, "us"), (1.0, "ms"), (math.inf, "s")],
    "frequency": [(1e3, "Hz"), (1e6, "kHz"), (1e9, "MHz"), (math.inf, "GHz")],
    "electric_field": [(math.inf, "V/cm")],
    "stark_area": [(math.inf, "V*us/cm")],
    "stark_coefficient": [(math.inf, "kHz/(V/cm)")],
    "length": [(1e-6, "nm"), (1e-3, "um"), (math.inf, "mm")],
}
_PRETTY = {"us": "µs", "V*us/cm": "V·µs/cm"}


class PlotError(ValueError):
    pass


def display_unit(si_tag: str, values) -> str:
    """Readable unit for SI data: the largest magnitude picks the prefix."""
    try:
        dim = dimension(si_tag)
    except UnitError:
        return si_tag
    table = _DISPLAY.get(dim)
    if table is None:
        return si_tag
    vmax = float(np.max(np.abs(values))) if np.size(values) else 0.0
    for limit, tag in table:
        if vmax < limit:
            return tag
    return table[-1][1]


def _scaled(values, si_tag: str, tag: str) -> np.ndarray:
    if tag == si_tag:
        return np.asarray(values, dtype=float)
    return np.asarray(values, dtype=float) * from_si(1.0, tag)


def uses_log_x(curve: SweepCurve) -> bool:
    scale = curve.meta.get("x_scale")
    if scale is not None:
        return scale == "log"
    return curve.x_name in _LOG_NAMES


def _fit_curve(fit: FitResult, x_lo: float, x_hi: float, log_x: bool):
    model = get_model(fit.model_id)
    if log_x and x_lo > 0:
        xs = np.geomspace(x_lo, x_hi, 400)
    else:
        xs = np.linspace(x_lo, x_hi, 400)
    options = {k: fit.metadata[k] for k in ("t0",) if k in fit.metadata}
    return xs, model.evaluate(xs, fit.params, **options)


def _check(curves):
    if not curves:
        raise PlotError("no datasets to plot")
    for c in curves:
        if len(c) == 0:
            raise PlotError(f"dataset {c.label or c.y_name!r} is empty")
    xu = {c.x_unit for c in curves}
    yu = {c.y_unit for c in curves}
    if len(xu) > 1 or len(yu) > 1:
        raise PlotError(f"cannot share axes across mixed units: x {sorted(xu)}, y {sorted(yu)}")


def render_svg(curves, fits=None, *, provenance: str = "", title: str | None = None,
               log_x: bool | None = None) -> bytes:
    """SVG bytes for one or more curves on shared axes.

    ``fits`` is a list aligned with ``curves`` (entries may be None); each
    fit is drawn as a line over its curve's abscissa range.
    """
    curves = list(curves)
    _check(curves)
    fits = list(fits or [])
    if len(fits) > len(curves):
        raise PlotError(f"{len(fits)} fits given for {len(curves)} datasets")
    fits += [None] * (len(curves) - len(fits))
    if log_x is None:
        log_x = any(uses_log_x(c) for c in curves)
    all_x = np.concatenate([c.abscissa for c in curves])
    all_y = np.concatenate([c.ordinate for c in curves])
    xt = display_unit(curves[0].x_unit, all_x)
    yt = display_unit(curves[0].y_unit, all_y)

    with matplotlib.rc_context({"svg.hashsalt": "erecho", "svg.fonttype": "path",
                                "path.simplify": False}):
        fig = Figure(figsize=(5.0, 3.6))
        ax = fig.add_subplot()
        for i, (c, f) in enumerate(zip(curves, fits)):
            color = f"C{i % 10}"
            x = _scaled(c.abscissa, c.x_unit, xt)
            y = _scaled(c.ordinate, c.y_unit, yt)
            label = c.label or c.y_name
            if c.sigma is not None:
                ax.errorbar(x, y, yerr=_scaled(c.sigma, c.y_unit, yt), fmt="o", ms=3,
                            color=color, label=label, capsize=2)
            else:
                ax.plot(x, y, "o", ms=3, color=color, label=label)
            if f is not None:
                xs, ys = _fit_curve(f, float(c.abscissa.min()), float(c.abscissa.max()), log_x)
                ax.plot(_scaled(xs, c.x_unit, xt), _scaled(ys, c.y_unit, yt), "-",
                        color=color, lw=1.2, label=f"fit: {f.model_id}")
        if log_x:
            if np.any(all_x <= 0):
                raise PlotError("log abscissa needs positive values")
            ax.set_xscale("log")
        ax.set_xlabel(f"{curves[0].x_name} ({_PRETTY.get(xt, xt)})")
        ax.set_ylabel(f"{curves[0].y_name} ({_PRETTY.get(yt, yt)})")
        if title:
            ax.set_title(title)
        ax.legend(fontsize=7, frameon=False)
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": "erecho"})
    svg = buf.getvalue()
    note = f"x_scale={'log' if log_x else 'linear'} y_scale=linear"
    if provenance:
        note = f"{provenance} {note}"
    comment = f"<!-- erecho provenance: {note.replace('--', '- -')} -->\n"
    head, sep, rest = svg.partition("?>\n")
    svg = head + sep + comment + rest if sep else comment + svg
    return svg.encode("utf-8")


def plot_curves(curves, path, fits=None, **kw) -> Path:
    """Render and write; nothing is written when rendering fails."""
    data = render_svg(curves, fits, **kw)
    path = Path(path)
    path.write_bytes(data)
    return path
