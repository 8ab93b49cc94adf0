"""Run configuration files (TOML).

A run file holds an ensemble, Monte Carlo settings and a list of sweeps::

    seed = 7
    out_dir = "runs/chip3h"          # optional

    [ensemble]
    preset = "chip3h"                # optional starting point
    t2_optical = "64.1 us"           # quantities: number (SI) or "value unit"
    bath = false                     # drop the preset's bath

    [sim]
    n_ions = 20000

    [[sweep]]
    name = "decay"
    kind = "two_pulse"
    fit = ["echo_decay"]
    vary.tau = { start = "2 us", stop = "40 us", num = 12 }

Each sweep varies exactly one variable: ``tau`` for ``two_pulse``,
``t_wait`` for ``three_pulse`` and ``saturation_recovery``, ``t_pulse``
for ``stark``.  A variable is ``{start, stop, num[, spacing]}`` with
spacing ``linear`` (default) or ``log``, or ``{values = [...]}``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import presets
from .core import (
    DipoleKernel,
    EnsembleSpec,
    InhomogeneousLine,
    LineShape,
    ShfModulation,
    SuddenJumpBath,
    validate,
)
from .fitting import MODELS
from .sim import SimConfig, validate_config
from .units import UnitError, parse_quantity

__all__ = ["ConfigError", "Sweep", "RunConfig", "load_config", "parse_config", "SWEEP_KINDS"]


class ConfigError(ValueError):
    """Unparseable or invalid run file; the message names the line or field."""


PRESETS = {"chip1h": presets.CHIP1H, "chip3h": presets.CHIP3H}

# sweep kind -> (variable, fixed options with their unit or type)
SWEEP_KINDS = {
    "two_pulse": ("tau", {"pulse_duration": "s", "detect_half_bins": int}),
    "three_pulse": ("t_wait", {"pulse_duration": "s", "detect_half_bins": int, "tau": "grid"}),
    "stark": ("t_pulse", {"pulse_duration": "s", "field": "V/m", "tau": "s"}),
    "saturation_recovery": ("t_wait", {"saturation_duration": "s", "power_scale": float,
                                       "pump_rate": "Hz", "branching": float,
                                       "g1_equilibrium": float}),
}

_ENSEMBLE_UNITS = {
    "t1_optical": "s", "t2_optical": "s", "stretch_x": None, "spin_t1_short": "s",
    "spin_t1_long": "s", "short_fraction": None, "stark_k": "Hz/(V/m)",
}
_LINE_UNITS = {"center_frequency": "Hz", "fwhm": "Hz", "truncation": None}
_BATH_UNITS = {"flip_rate": "Hz", "max_shift": "Hz", "tls_rate": "Hz", "tls_t0": "s"}
_SHF_UNITS = {"depth": None, "frequency": "Hz"}
_SIM_UNITS = {
    "n_ions": int, "time_step": "s", "pulse_bandwidth": "Hz", "detection_bin": "s",
    "block_size": int, "workers": int, "bath_components": int, "memory_budget": int,
    "amplitude_scale": None, "laser_detuning": "Hz", "sample_full_line": bool,
}


@dataclass(frozen=True)
class Sweep:
    name: str
    kind: str
    variable: str
    values: tuple
    options: dict = field(default_factory=dict)
    fit: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    ensemble: EnsembleSpec
    sim: SimConfig
    sweeps: tuple
    seed: int = 0
    out_dir: str | None = None
    source: str = "<string>"

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=int(seed),
                                   sim=dataclasses.replace(self.sim, seed=int(seed)))

    def canonical(self) -> dict:
        """Every input that affects outputs, as plain JSON types."""
        return {
            "ensemble": _plain(dataclasses.asdict(self.ensemble)),
            "sim": _plain(dataclasses.asdict(self.sim)),
            "sweeps": [_plain(dataclasses.asdict(s)) for s in self.sweeps],
            "seed": self.seed,
        }

    def sha256(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (LineShape, DipoleKernel)):
        return obj.value
    if isinstance(obj, float):
        # repr keeps every bit; JSON has no inf/nan
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, np.generic):
        return _plain(obj.item())
    return obj


def _quantity(value, unit, where: str):
    if unit is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if unit is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false, got {value!r}")
        return value
    if unit is float or unit is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ConfigError(f"{where}: expected a quantity, got {value!r}")
    try:
        return parse_quantity(value, unit)
    except UnitError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _table(raw, where: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected a table")
    return raw


def _fields(raw: dict, units: dict, where: str) -> dict:
    out = {}
    for key, value in raw.items():
        if key not in units:
            raise ConfigError(f"{where}.{key}: unknown field (allowed: {', '.join(sorted(units))})")
        out[key] = _quantity(value, units[key], f"{where}.{key}")
    return out


def _ensemble(raw: dict) -> EnsembleSpec:
    raw = dict(_table(raw, "ensemble"))
    preset = raw.pop("preset", None)
    if preset is None:
        base = EnsembleSpec(InhomogeneousLine(), presets.T1_OPTICAL, 1e-5)
    elif preset in PRESETS:
        base = PRESETS[preset]
    else:
        raise ConfigError(f"ensemble.preset: unknown preset {preset!r} "
                          f"(known: {', '.join(sorted(PRESETS))})")
    changes = {}
    if "line" in raw:
        line = dict(_table(raw.pop("line"), "ensemble.line"))
        shape = line.pop("shape", None)
        kw = _fields(line, _LINE_UNITS, "ensemble.line")
        if shape is not None:
            try:
                kw["shape"] = LineShape(shape)
            except ValueError:
                raise ConfigError(f"ensemble.line.shape: unknown shape {shape!r}") from None
        changes["line"] = dataclasses.replace(base.line, **kw)
    for key, cls, units in (("bath", SuddenJumpBath, _BATH_UNITS),
                            ("shf_modulation", ShfModulation, _SHF_UNITS)):
        if key not in raw:
            continue
        value = raw.pop(key)
        if value is False:
            changes[key] = None
            continue
        kw = _fields(_table(value, f"ensemble.{key}"), units, f"ensemble.{key}")
        current = getattr(base, key)
        try:
            changes[key] = dataclasses.replace(current, **kw) if current else cls(**kw)
        except TypeError as exc:
            raise ConfigError(f"ensemble.{key}: {exc}") from None
    if "dipole_kernel" in raw:
        k = raw.pop("dipole_kernel")
        try:
            changes["dipole_kernel"] = DipoleKernel(k)
        except ValueError:
            raise ConfigError(f"ensemble.dipole_kernel: unknown kernel {k!r}") from None
    changes.update(_fields(raw, _ENSEMBLE_UNITS, "ensemble"))
    spec = dataclasses.replace(base, **changes)
    report = validate(spec)
    if report:
        raise ConfigError("ensemble: " + "; ".join(report))
    return spec


def _grid(raw, unit: str, where: str) -> tuple:
    raw = _table(raw, where)
    if "values" in raw:
        extra = set(raw) - {"values"}
        if extra:
            raise ConfigError(f"{where}: 'values' cannot be combined with {sorted(extra)}")
        vals = raw["values"]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"{where}.values: expected a non-empty list")
        out = [_quantity(v, unit, f"{where}.values[{i}]") for i, v in enumerate(vals)]
    else:
        allowed = {"start", "stop", "num", "spacing"}
        extra = set(raw) - allowed
        if extra:
            raise ConfigError(f"{where}.{sorted(extra)[0]}: unknown field")
        missing = {"start", "stop", "num"} - set(raw)
        if missing:
            raise ConfigError(f"{where}: missing {', '.join(sorted(missing))}")
        start = _quantity(raw["start"], unit, f"{where}.start")
        stop = _quantity(raw["stop"], unit, f"{where}.stop")
        num = _quantity(raw["num"], int, f"{where}.num")
        if num < 1:
            raise ConfigError(f"{where}.num: must be >= 1")
        spacing = raw.get("spacing", "linear")
        if spacing == "linear":
            out = np.linspace(start, stop, num).tolist()
        elif spacing == "log":
            if not (start > 0 and stop > 0):
                raise ConfigError(f"{where}: log spacing needs start, stop > 0")
            out = np.geomspace(start, stop, num).tolist()
        else:
            raise ConfigError(f"{where}.spacing: expected 'linear' or 'log', got {spacing!r}")
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError(f"{where}: values must be strictly ascending")
    return tuple(float(v) for v in out)


def _sweep(raw, i: int) -> Sweep:
    where = f"sweep[{i}]"
    raw = dict(_table(raw, where))
    name = raw.pop("name", f"sweep{i}")
    if not isinstance(name, str) or not name or not name.replace("_", "").replace("-", "").isalnum():
        raise ConfigError(f"{where}.name: must be a non-empty identifier, got {name!r}")
    kind = raw.pop("kind", None)
    if kind not in SWEEP_KINDS:
        raise ConfigError(f"{where}.kind: expected one of {', '.join(SWEEP_KINDS)}, got {kind!r}")
    variable, fixed = SWEEP_KINDS[kind]
    vary = _table(raw.pop("vary", None) or {}, f"{where}.vary")
    if len(vary) != 1:
        raise ConfigError(f"{where}.vary: exactly one sweep variable is required "
                          f"(got {len(vary)}: {', '.join(sorted(vary)) or 'none'})")
    (var, grid), = vary.items()
    if var != variable:
        raise ConfigError(f"{where}.vary.{var}: a {kind} sweep varies '{variable}'")
    values = _grid(grid, "s", f"{where}.vary.{var}")
    models = raw.pop("fit", [])
    if isinstance(models, str):
        models = [models]
    if not isinstance(models, list):
        raise ConfigError(f"{where}.fit: expected a list of model ids")
    for m in models:
        if m not in MODELS:
            raise ConfigError(f"{where}.fit: unknown model_id {m!r} "
                              f"(known: {', '.join(sorted(MODELS))})")
    options = {}
    for key, value in raw.items():
        if key not in fixed:
            raise ConfigError(f"{where}.{key}: unknown field for a {kind} sweep "
                              f"(allowed: {', '.join(sorted(fixed))})")
        unit = fixed[key]
        if unit == "grid":
            options[key] = _grid(value, "s", f"{where}.{key}")
        else:
            options[key] = _quantity(value, unit, f"{where}.{key}")
    if kind == "three_pulse" and "tau" not in options:
        raise ConfigError(f"{where}.tau: a three_pulse sweep needs a tau grid")
    if kind == "stark" and "field" not in options:
        raise ConfigError(f"{where}.field: a stark sweep needs the gate field")
    return Sweep(name, kind, variable, values, options, tuple(models))


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    try:
        return _build(raw, source)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _build(raw: dict, source: str) -> RunConfig:
    allowed = {"seed", "out_dir", "ensemble", "sim", "sweep"}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{key}: unknown top-level field (allowed: {', '.join(sorted(allowed))})")
    seed = _quantity(raw.get("seed", 0), int, "seed")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed: must be in [0, 2^64)")
    out_dir = raw.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir: expected a string")
    spec = _ensemble(raw.get("ensemble", {}))
    sim_kw = _fields(_table(raw.get("sim", {}), "sim"), _SIM_UNITS, "sim")
    sim = SimConfig(seed=seed, **sim_kw)
    report = validate_config(sim)
    if report:
        raise ConfigError("sim: " + "; ".join(report))
    sweeps = raw.get("sweep", [])
    if not isinstance(sweeps, list) or not sweeps:
        raise ConfigError("sweep: at least one [[sweep]] table is required")
    parsed = tuple(_sweep(s, i) for i, s in enumerate(sweeps))
    names = [s.name for s in parsed]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise ConfigError(f"sweep: duplicate sweep name(s) {dup}")
    return RunConfig(spec, sim, parsed, seed, out_dir, source)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))
