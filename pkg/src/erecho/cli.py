"""Batch command line: ``erecho simulate | fit | report | plot``.

Exit codes: 0 success, 2 invalid input (config, dataset, model id, fit
precondition), 3 a fit did not converge (results are still written and
flagged), 4 file-system error.

Output directory: ``--out-dir``, else the run file's ``out_dir`` (simulate
only, relative to the run file), else ``$ERECHO_OUT_DIR``, else the
current directory.  Outputs carry no timestamps, so identical inputs give
byte-identical files, manifests included.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
from pathlib import Path

from . import __version__, presets
from .analytic import homogeneous_linewidth, od_from_efficiency
from .config import ConfigError, load_config
from .core import DipoleKernel, FitResult, SweepCurve, ValidationError
from .fitting import (
    FitError,
    UnknownModel,
    fit,
    fit_echo_decay,
    fit_linear_broadening,
    fit_lorentzian_peak,
    fit_recovery,
    fit_spectral_diffusion,
    fit_stark_modulation,
    fit_submodels,
    get_model,
)
from .io import DatasetError, format_dataset, read_dataset
from .metrics import (
    MEASURED_DEVICE,
    ON_CHIP_ELECTRODES,
    TARGET_DEVICE,
    capability_report,
)
from .plotting import PlotError, render_svg
from .sim import (
    BudgetExceeded,
    saturation_recovery,
    stark_gated_echo,
    three_pulse_sweep,
    two_pulse_decay,
)
from .units import UnitError, parse_quantity

__all__ = ["main", "EXIT_OK", "EXIT_INVALID", "EXIT_NOT_CONVERGED", "EXIT_IO", "OUT_DIR_ENV"]

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO = 4
OUT_DIR_ENV = "ERECHO_OUT_DIR"

# model id -> {param: unit}; "x"/"y" borrow the dataset's axis units
PARAM_UNITS = {
    "echo_decay": {"I0": "y", "T2": "s", "x": ""},
    "spectral_diffusion": {"gamma0": "Hz", "gamma_sd": "Hz", "rate_r": "Hz", "gamma_tls": "Hz"},
    "sd_bath_only": {"gamma0": "Hz", "gamma_sd": "Hz", "rate_r": "Hz"},
    "sd_tls_only": {"gamma0": "Hz", "gamma_tls": "Hz"},
    "recovery_2exp": {"a_inf": "y", "a_short": "y", "t1_short": "s", "a_long": "y",
                      "t1_long": "s"},
    "lorentzian": {"center": "x", "fwhm": "x", "amplitude": "y", "offset": "y"},
    "linear_broadening": {"gamma0p": "Hz", "alpha": "Hz/K"},
    "stark_sin4": {"k": "Hz/(V/m)", "a0": ""},
    "stark_cos4": {"k": "Hz/(V/m)", "a0": ""},
}

_DEFAULT_MODEL = {
    "two_pulse": "echo_decay",
    "three_pulse": "echo_decay",
    "three_pulse_linewidth": "spectral_diffusion",
    "saturation_recovery": "recovery_2exp",
}

_PREFIX = [(1e9, "G"), (1e6, "M"), (1e3, "k"), (1.0, ""), (1e-3, "m"), (1e-6, "µ"),
           (1e-9, "n"), (1e-12, "p")]


class CommandError(ValueError):
    pass


# --------------------------------------------------------------------------
# output helpers


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True, allow_nan=True, ensure_ascii=False)
            + "\n").encode("utf-8")


class _Outputs:
    """Single writer for an output directory; records the hash of each file."""

    def __init__(self, root: Path):
        self.root = root
        self.files: dict[str, str] = {}

    def write(self, name: str, data: bytes) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / name
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, path)
        self.files[name] = _sha256(data)
        return path


def _out_dir(args, config_default: Path | None = None) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    if config_default is not None:
        return config_default
    return Path(os.environ.get(OUT_DIR_ENV) or ".")


def _manifest(command: str, inputs: dict, outputs: dict, **extra) -> dict:
    m = {"tool": "erecho", "version": __version__, "command": command,
         "inputs": dict(sorted(inputs.items())), "outputs": dict(sorted(outputs.items()))}
    m.update(extra)
    return m


# --------------------------------------------------------------------------
# formatting


def _with_unit(value: float, err: float, unit: str) -> str:
    if unit in ("s", "Hz", "m") and math.isfinite(value) and value != 0:
        for scale, p in _PREFIX:
            if abs(value) >= scale:
                break
        u = f"{p}{unit}"
        v, e = value / scale, err / scale
    elif unit == "Hz/(V/m)":
        u, v, e = "kHz/(V/cm)", value / 10.0, err / 10.0
    elif unit == "Hz/K":
        u, v, e = "kHz/K", value / 1e3, err / 1e3
    else:
        u, v, e = unit, value, err
    sep = f" {u}" if u else ""
    if math.isfinite(e):
        return f"{v:.4g}{sep} ± {e:.2g}{sep}"
    return f"{v:.4g}{sep} ± n/a"


def fit_summary(res: FitResult, curve: SweepCurve | None = None) -> str:
    """Human-readable fit summary; echo decays also report gamma_h."""
    units = PARAM_UNITS.get(res.model_id, {})
    axis = {"x": curve.x_unit if curve else "", "y": curve.y_unit if curve else ""}
    status = "converged" if res.converged else "NOT CONVERGED"
    lines = [f"model {res.model_id}: {status} ({res.message})"]
    err = res.stderr
    fixed = res.metadata.get("fixed", {})
    for name in res.param_names:
        unit = units.get(name, "")
        unit = axis.get(unit, unit)
        if unit in ("1", "a.u.", "counts"):
            unit = ""
        tag = " (fixed)" if name in fixed else ""
        lines.append(f"{name} = {_with_unit(res.params[name], err.get(name, math.nan), unit)}{tag}")
        if res.model_id == "echo_decay" and name == "T2":
            t2, dt2 = res.params["T2"], err.get("T2", math.nan)
            g = homogeneous_linewidth(t2)
            lines.append(f"gamma_h = 1/(pi T2) = {_with_unit(g, g * dt2 / t2, 'Hz')}")
    lines.append(f"residual_norm = {res.residual_norm:.6g} over {res.n_points} points")
    return "\n".join(lines)


def _fit_input(curve: SweepCurve, model_id: str) -> SweepCurve:
    """Stark models fit against pulse area; convert gate-length data."""
    if not model_id.startswith("stark_") or curve.x_unit == "V*s/m":
        return curve
    field = curve.meta.get("field")
    if curve.x_unit != "s" or not isinstance(field, (int, float)):
        raise CommandError(
            f"{model_id} needs a Stark pulse-area abscissa (V*s/m) or gate lengths "
            f"with a 'field' metadata entry")
    return curve.replace(abscissa=curve.abscissa * float(field), x_unit="V*s/m",
                         x_name="stark_area")


def _run_fit(curve: SweepCurve, model_id: str, *, t0=None, free_x=False) -> FitResult:
    get_model(model_id)
    data = _fit_input(curve, model_id)
    if model_id == "echo_decay":
        return fit_echo_decay(data, free_x=free_x)
    if model_id == "spectral_diffusion":
        return fit_spectral_diffusion(data, t0=t0)
    if model_id in ("sd_bath_only", "sd_tls_only"):
        return fit(data, model_id, t0=t0)
    if model_id == "recovery_2exp":
        return fit_recovery(data)
    if model_id == "lorentzian":
        return fit_lorentzian_peak(data)
    if model_id == "linear_broadening":
        return fit_linear_broadening(data)
    if model_id in ("stark_sin4", "stark_cos4"):
        return fit_stark_modulation(data, kernel=model_id.split("_")[1])
    return fit(data, model_id)


def _default_model(curve: SweepCurve) -> str:
    kind = curve.meta.get("kind")
    if kind == "stark":
        return f"stark_{curve.meta.get('kernel', 'sin4')}"
    if kind in _DEFAULT_MODEL:
        return _DEFAULT_MODEL[kind]
    raise CommandError("dataset has no 'kind' metadata; choose a model with --model")


# --------------------------------------------------------------------------
# simulate


def _run_sweep(cfg, sw) -> list[tuple[str, SweepCurve]]:
    spec, sim, opt = cfg.ensemble, cfg.sim, sw.options
    pulse = opt.get("pulse_duration", presets.PULSE_DURATION)
    if sw.kind == "two_pulse":
        c = two_pulse_decay(spec, sim, sw.values, pulse,
                            detect_half_bins=opt.get("detect_half_bins", 8))
        return [(f"{sw.name}.csv", c.replace(label=sw.name))]
    if sw.kind == "three_pulse":
        rows = three_pulse_sweep(spec, sim, opt["tau"], sw.values, pulse,
                                 detect_half_bins=opt.get("detect_half_bins", 8))
        waits = [r[0] for r in rows]
        gammas = [r[2] for r in rows]
        main = SweepCurve(waits, gammas, x_unit="s", y_unit="Hz", label=sw.name,
                          x_name="t_wait", y_name="gamma_eff",
                          meta={"kind": "three_pulse_linewidth", "x_scale": "log",
                                "n_ions": sim.n_ions, "seed": sim.seed})
        out = [(f"{sw.name}.csv", main)]
        out += [(f"{sw.name}.tw{j:02d}.csv", r[1]) for j, r in enumerate(rows)]
        return out
    if sw.kind == "stark":
        c = stark_gated_echo(spec, sim, sw.values, opt["field"], tau=opt.get("tau"),
                             pulse_duration=pulse)
        return [(f"{sw.name}.csv", c.replace(label=sw.name))]
    if sw.kind == "saturation_recovery":
        kw = {k: v for k, v in opt.items() if k != "pulse_duration"}
        c = saturation_recovery(spec, sim, sw.values, **kw)
        return [(f"{sw.name}.csv", c.replace(label=sw.name))]
    raise CommandError(f"unknown sweep kind {sw.kind!r}")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    models = None
    if args.model:
        for m in args.model:
            get_model(m)
        models = tuple(args.model)
    if models is not None:
        cfg = dataclasses.replace(
            cfg, sweeps=tuple(dataclasses.replace(s, fit=models) for s in cfg.sweeps))
    cfg_dir = Path(args.config).parent
    default = (cfg_dir / cfg.out_dir) if cfg.out_dir else None
    out = _Outputs(_out_dir(args, default))
    config_bytes = Path(args.config).read_bytes()

    summaries, fits, failed = [], {}, []
    for sw in cfg.sweeps:
        datasets = _run_sweep(cfg, sw)
        for name, curve in datasets:
            out.write(name, format_dataset(curve).encode("utf-8"))
        primary = datasets[0][1]
        for m in sw.fit:
            res = _run_fit(primary, m)
            res.metadata["dataset"] = datasets[0][0]
            fname = f"{sw.name}.{m}.fit.json"
            out.write(fname, _json_bytes(res.to_dict()))
            fits[fname] = bool(res.converged)
            if not res.converged:
                failed.append(fname)
            summaries.append(f"[{sw.name}] " + fit_summary(res, _fit_input(primary, m)))

    manifest = _manifest("simulate", {Path(args.config).name: _sha256(config_bytes)}, out.files,
                         config_sha256=cfg.sha256(), seed=cfg.seed, resolved_config=cfg.canonical(),
                         fits_converged=fits)
    out.write("manifest.json", _json_bytes(manifest))
    if args.format == "json":
        sys.stdout.write(_json_bytes(manifest).decode("utf-8"))
    else:
        print(f"config sha256 {cfg.sha256()} seed {cfg.seed}")
        for name in sorted(out.files):
            print(f"wrote {out.root / name}")
        for s in summaries:
            print(s)
    if failed:
        print(f"erecho: fit did not converge: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# --------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    path = Path(args.dataset)
    raw = path.read_bytes()
    curve = read_dataset(path)
    t0 = parse_quantity(args.t0, "s") if args.t0 is not None else None
    out = _Outputs(_out_dir(args))
    stem = path.name[:-4] if path.name.endswith(".csv") else path.stem
    options = {"t0": t0, "free_x": bool(args.free_x), "submodels": bool(args.submodels)}

    if args.submodels:
        if args.model and args.model not in ("spectral_diffusion", "sd_bath_only", "sd_tls_only"):
            raise CommandError("--submodels compares spectral-diffusion models only")
        rep = fit_submodels(curve, t0=t0)
        name = f"{stem}.submodels.json"
        out.write(name, _json_bytes(rep.to_dict()))
        converged = all(r.converged for r in rep.results.values())
        text = rep.table()
        payload = rep.to_dict()
        model = "submodels"
    else:
        model = args.model or _default_model(curve)
        res = _run_fit(curve, model, t0=t0, free_x=args.free_x)
        res.metadata["dataset"] = path.name
        name = f"{stem}.{model}.fit.json"
        out.write(name, _json_bytes(res.to_dict()))
        converged = res.converged
        text = fit_summary(res, _fit_input(curve, model))
        payload = res.to_dict()
    manifest = _manifest("fit", {path.name: _sha256(raw)}, dict(out.files), model=model,
                         options={k: v for k, v in options.items() if v is not None})
    out.write(f"{stem}.{model}.manifest.json", _json_bytes(manifest))
    if args.format == "json":
        sys.stdout.write(_json_bytes(payload).decode("utf-8"))
    else:
        print(text)
    if not converged:
        print(f"erecho: fit did not converge (results written to {out.root / name})",
              file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# --------------------------------------------------------------------------
# report


def _apply_fit(spec, res: FitResult):
    p = res.params
    if res.model_id == "echo_decay":
        return dataclasses.replace(spec, t2_optical=p["T2"])
    if res.model_id == "recovery_2exp":
        total = p["a_short"] + p["a_long"]
        frac = p["a_short"] / total if total > 0 else spec.short_fraction
        return dataclasses.replace(spec, spin_t1_short=p["t1_short"], spin_t1_long=p["t1_long"],
                                   short_fraction=min(max(frac, 0.0), 1.0))
    if res.model_id in ("stark_sin4", "stark_cos4"):
        return dataclasses.replace(spec, stark_k=p["k"])
    return spec


def cmd_report(args) -> int:
    inputs = {}
    if args.config:
        spec = load_config(args.config).ensemble
        inputs[Path(args.config).name] = _sha256(Path(args.config).read_bytes())
    else:
        from .config import PRESETS
        spec = PRESETS[args.preset]
        inputs[f"preset:{args.preset}"] = ""
    for f in args.fit or []:
        raw = Path(f).read_bytes()
        try:
            res = FitResult.from_dict(json.loads(raw))
        except (ValueError, KeyError, TypeError) as exc:
            raise CommandError(f"{f}: not a fit result ({exc})") from None
        spec = _apply_fit(spec, res)
        inputs[Path(f).name] = _sha256(raw)
    if args.od is not None:
        od = float(args.od)
        if not od >= 0:
            raise CommandError("--od must be >= 0")
    else:
        od = od_from_efficiency(args.efficiency)
    spin_t2 = parse_quantity(args.spin_t2, "s") if args.spin_t2 else None
    rep = capability_report(spec, od, geometry=MEASURED_DEVICE, target_geometry=TARGET_DEVICE,
                            semm_geometry=ON_CHIP_ELECTRODES,
                            semm_kernel=DipoleKernel(args.semm_kernel),
                            purcell_factor=args.purcell, spin_t2=spin_t2)
    out = _Outputs(_out_dir(args))
    out.write("report.txt", (rep.table() + "\n").encode("utf-8"))
    out.write("report.json", (rep.to_json() + "\n").encode("utf-8"))
    options = {"od": od, "purcell": args.purcell, "spin_t2": spin_t2,
               "semm_kernel": args.semm_kernel}
    out.write("report.manifest.json",
              _json_bytes(_manifest("report", inputs, dict(out.files), options=options)))
    if args.format == "json":
        print(rep.to_json())
    else:
        print(rep.table())
    return EXIT_OK


# --------------------------------------------------------------------------
# plot


def cmd_plot(args) -> int:
    paths = [Path(p) for p in args.datasets]
    raws = [p.read_bytes() for p in paths]
    curves = [read_dataset(p) for p in paths]
    fits, fit_raws = [], []
    for f in args.fit or []:
        raw = Path(f).read_bytes()
        try:
            fits.append(FitResult.from_dict(json.loads(raw)))
        except (ValueError, KeyError, TypeError) as exc:
            raise CommandError(f"{f}: not a fit result ({exc})") from None
        fit_raws.append((Path(f).name, raw))
    if len(fits) > len(paths):
        raise CommandError(f"{len(fits)} --fit files for {len(paths)} datasets")
    fits += [None] * (len(paths) - len(fits))
    # a Stark fit lives on the pulse-area axis
    curves = [c if fr is None else _fit_input(c, fr.model_id) for c, fr in zip(curves, fits)]
    log_x = {"log": True, "linear": False, "auto": None}[args.x_scale]

    def provenance(ds_idx):
        inputs = {paths[i].name: _sha256(raws[i]) for i in ds_idx}
        inputs.update({n: _sha256(r) for j, (n, r) in enumerate(fit_raws) if j in ds_idx})
        m = _manifest("plot", inputs, {}, x_scale=args.x_scale)
        return f"manifest_sha256={_sha256(_json_bytes(m))} sources={','.join(sorted(inputs))}"

    # render everything before writing so a bad dataset leaves no files
    rendered = []
    if args.overlay:
        rendered.append((args.output or "overlay.svg",
                         render_svg(curves, fits, provenance=provenance(range(len(paths))),
                                    log_x=log_x, title=args.title)))
    else:
        if args.output and len(paths) > 1:
            raise CommandError("--output names a single file; use --overlay or drop it")
        for i, (p, c, fr) in enumerate(zip(paths, curves, fits)):
            name = args.output or (p.name[:-4] if p.name.endswith(".csv") else p.stem) + ".svg"
            rendered.append((name, render_svg([c], [fr], provenance=provenance([i]),
                                              log_x=log_x, title=args.title or c.label)))
    out = _Outputs(_out_dir(args))
    for name, data in rendered:
        out.write(name, data)
    if args.format == "json":
        sys.stdout.write(_json_bytes({"outputs": out.files}).decode("utf-8"))
    else:
        for name in out.files:
            print(f"wrote {out.root / name}")
    return EXIT_OK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or .)")
    common.add_argument("--format", choices=("text", "json"), default="text",
                        help="stdout format")

    parser = argparse.ArgumentParser(prog="erecho", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"erecho {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run the sweeps in a TOML run file")
    p.add_argument("--config", required=True, help="run file (TOML)")
    p.add_argument("--seed", type=int, help="override the run file's seed")
    p.add_argument("--model", action="append",
                   help="fit this model to every sweep (repeatable; replaces the run file's fits)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="fit a registry model to a dataset")
    p.add_argument("dataset")
    p.add_argument("--model", help="model id (default: from the dataset's 'kind' metadata)")
    p.add_argument("--submodels", action="store_true",
                   help="compare TLS-only, spin-bath-only and full spectral-diffusion fits")
    p.add_argument("--t0", help="TLS reference time, e.g. '0.1 ms' (default: first T_W)")
    p.add_argument("--free-x", action="store_true", help="free the echo-decay stretch exponent")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", parents=[common], help="memory capability report")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="take the ensemble from a run file")
    src.add_argument("--preset", choices=("chip1h", "chip3h"), default="chip3h")
    p.add_argument("--fit", action="append", help="fit result JSON to fold in (repeatable)")
    od = p.add_mutually_exclusive_group()
    od.add_argument("--od", type=float, help="measured optical depth")
    od.add_argument("--efficiency", type=float, default=presets.ECHO_EFFICIENCY,
                    help="measured echo efficiency, converted with (OD/4)^2")
    p.add_argument("--purcell", type=float, help="Purcell factor for the single-ion row")
    p.add_argument("--spin-t2", help="projected spin T2 for the single-ion row, e.g. '1 s'")
    p.add_argument("--semm-kernel", choices=("sin4", "cos4", "isotropic"), default="cos4",
                   help="dipole kernel under the on-chip electrodes")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("plot", parents=[common], help="SVG plots of datasets")
    p.add_argument("datasets", nargs="+")
    p.add_argument("--fit", action="append",
                   help="fit result drawn over the dataset in the same position (repeatable)")
    p.add_argument("--overlay", action="store_true", help="all datasets on one set of axes")
    p.add_argument("--output", help="file name for a single plot")
    p.add_argument("--x-scale", choices=("auto", "linear", "log"), default="auto")
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"erecho: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except UnknownModel as exc:
        print(f"erecho: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, DatasetError, ValidationError, FitError, UnitError, PlotError,
            CommandError, BudgetExceeded, ValueError) as exc:
        print(f"erecho: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
