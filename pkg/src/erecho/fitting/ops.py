"""Fit operations built on the model registry."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import FitResult, SweepCurve
from .lm import levenberg_marquardt
from .models import POSTPROCESS, ModelSpec, get_model

__all__ = [
    "FitError",
    "fit",
    "fit_echo_decay",
    "fit_spectral_diffusion",
    "fit_submodels",
    "SubmodelReport",
    "fit_recovery",
    "fit_lorentzian_peak",
    "fit_linear_broadening",
    "fit_stark_modulation",
]


class FitError(ValueError):
    pass


def _check_curve(curve: SweepCurve, n_free: int, n_min: int | None = None):
    x, y = curve.abscissa, curve.ordinate
    if x.ndim != 1 or y.shape != x.shape:
        raise FitError("abscissa and ordinate must be 1-D arrays of equal length")
    for name, arr in (("abscissa", x), ("ordinate", y)):
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise FitError(f"{name} has non-finite value at index {int(bad[0])}")
    if curve.sigma is not None:
        bad = np.flatnonzero(~(np.asarray(curve.sigma) > 0))
        if bad.size:
            raise FitError(f"sigma must be > 0 (index {int(bad[0])})")
    need = n_free + 1 if n_min is None else n_min
    if len(x) < need:
        raise FitError(f"curve has {len(x)} points; need at least {need} "
                       f"for {n_free} free parameters")


def _better(a, b) -> bool:
    if a.converged != b.converged:
        return a.converged
    return a.cost < b.cost * (1.0 - 1e-12)


def fit(curve: SweepCurve, model, overrides: dict | None = None, *, fixed: dict | None = None,
        restarts: bool | int = True, max_iter: int = 500, **options) -> FitResult:
    """Least-squares fit of a registry model to a curve.

    Parameters
    ----------
    curve : SweepCurve
        Data; ``sigma`` (when present) weights the residuals.
    model : str or ModelSpec
        Registry id or model object.
    overrides : dict, optional
        Initial values replacing the model's heuristic start.
    fixed : dict, optional
        Parameters held constant.  Defaults to the model's frozen set
        (``x = 1`` for the echo decay); pass ``{}`` to free everything.
    restarts : bool or int
        Multi-start from the model's alternative starting points; an int caps
        the number of starts.
    **options
        Model options such as ``t0`` (spectral diffusion).

    Returns
    -------
    FitResult
        Covariance is s^2 (J^T J + lambda D)^-1 at the solution with s^2 the
        residual variance; rows for fixed parameters are zero.
    """
    spec = get_model(model)
    fixed = dict(spec.fixed_default if fixed is None else fixed)
    unknown = set(fixed) | set(overrides or {})
    unknown -= set(spec.param_names)
    if unknown:
        raise FitError(f"{spec.model_id} has no parameter(s) {sorted(unknown)}")
    free = np.array([n not in fixed for n in spec.param_names])
    n_free = int(free.sum())
    _check_curve(curve, n_free)
    ctx = spec.context(curve, **options)
    x, y = curve.abscissa.astype(float), curve.ordinate.astype(float)
    w = 1.0 / np.asarray(curve.sigma, dtype=float) if curve.sigma is not None else np.ones_like(y)

    p0 = np.asarray(spec.init(curve, ctx), dtype=float)
    for i, n in enumerate(spec.param_names):
        if overrides and n in overrides:
            p0[i] = overrides[n]
        if n in fixed:
            p0[i] = fixed[n]
    lo, hi = np.array(spec.lower, float), np.array(spec.upper, float)
    p0 = np.clip(p0, lo, hi)

    def expand(q):
        p = p0.copy()
        p[free] = q
        return p

    def resid(q):
        return (spec.func(x, expand(q), ctx) - y) * w

    def jac(q):
        return spec.jac(x, expand(q), ctx)[:, free] * w[:, None]

    names = [n for n, f in zip(spec.param_names, free) if f]
    starts = [p0]
    if restarts and spec.restarts is not None and not overrides:
        alt = spec.restarts(curve, ctx, p0)
        if not isinstance(restarts, bool):
            alt = alt[: max(int(restarts) - 1, 0)]
        starts += [np.clip(a, lo, hi) for a in alt]

    best = None
    for s in starts:
        res = levenberg_marquardt(resid, jac, s[free], lo[free], hi[free],
                                  max_iter=max_iter, names=names,
                                  data_norm2=float(np.dot(y * w, y * w)))
        if best is None or _better(res, best):
            best = res

    p = expand(best.x)
    n, dof = len(y), len(y) - n_free
    s2 = 2.0 * best.cost / dof if dof > 0 else math.nan
    cov = np.zeros((spec.n_params, spec.n_params))
    J = best.jacobian
    if np.all(np.isfinite(J)) and J.size:
        # work with unit-norm columns so rank and conditioning ignore units
        cn = np.linalg.norm(J, axis=0)
        cn = np.where(cn > 0, cn, 1.0)
        Jn = J / cn
        A = Jn.T @ Jn
        # damped normal equations; the final damping is negligible after a
        # converged run and only regularises flat directions
        lam = best.damping if best.damping < 1e-3 else 0.0
        A = A + lam * np.diag(np.diag(A))
        cov_free = np.linalg.pinv(A, rcond=1e-15, hermitian=True) / np.outer(cn, cn) * s2
        idx = np.flatnonzero(free)
        cov[np.ix_(idx, idx)] = cov_free
        rank = int(np.linalg.matrix_rank(Jn))
        cond = float(np.linalg.cond(Jn))
    else:
        cov[:] = math.nan
        rank, cond = 0, math.inf

    order = tuple(range(spec.n_params))
    post = POSTPROCESS.get(spec.model_id)
    if post is not None:
        p, order = post(p)
        cov = cov[np.ix_(order, order)]
    params = {nm: float(v) for nm, v in zip(spec.param_names, p)}
    meta = {
        "free": [nm for nm, f in zip(spec.param_names, free[list(order)]) if f],
        "fixed": {k: float(v) for k, v in fixed.items()},
        "iterations": int(best.n_iter),
        "jacobian_rank": rank,
        "condition_number": cond,
        "weighted": curve.sigma is not None,
        "ordinate": curve.y_name,
        "y_unit": curve.y_unit,
        "x_unit": curve.x_unit,
        "starts": len(starts),
    }
    meta.update({k: (float(v) if isinstance(v, (int, float)) else str(v))
                 for k, v in ctx.items() if k != "area_max"})
    msg = best.message
    if rank < n_free and best.converged:
        msg += f"; Jacobian rank {rank} < {n_free} free parameters"
    return FitResult(spec.model_id, params, cov, float(math.sqrt(2.0 * best.cost)), n,
                     bool(best.converged), tuple(spec.param_names), msg, meta)


def fit_echo_decay(curve: SweepCurve, *, free_x: bool = False, **kw) -> FitResult:
    """Fit I0 exp(-(4 tau / T2)^x); x is held at 1 unless ``free_x``."""
    return fit(curve, "echo_decay", fixed={} if free_x else None, **kw)


def fit_spectral_diffusion(curve: SweepCurve, t0: float | None = None, **kw) -> FitResult:
    """Fit the full effective-linewidth law to gamma_eff(T_W).

    ``t0`` defaults to the smallest waiting time in the data.
    """
    _check_sd(curve, t0)
    return fit(curve, "spectral_diffusion", t0=t0, **kw)


def _check_sd(curve, t0):
    if len(curve) < 5:
        raise FitError(f"spectral-diffusion fits need >= 5 points (got {len(curve)})")
    if t0 is not None and np.any(curve.abscissa < t0):
        raise FitError(f"all waiting times must be >= t0 = {t0:g} s")


@dataclass
class SubmodelReport:
    """Three nested fits ordered by residual norm (best first)."""

    results: dict = field(default_factory=dict)

    @property
    def ranking(self) -> list[str]:
        return sorted(self.results, key=lambda m: self.results[m].residual_norm)

    def table(self) -> str:
        lines = [f"{'model':<20}{'residual_norm':>16}  parameters"]
        for m in self.ranking:
            r = self.results[m]
            ps = ", ".join(f"{k}={v:.6g}" for k, v in r.params.items())
            lines.append(f"{m:<20}{r.residual_norm:>16.6g}  {ps}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"ranking": self.ranking,
                "results": {m: r.to_dict() for m, r in self.results.items()}}


def fit_submodels(curve: SweepCurve, t0: float | None = None, **kw) -> SubmodelReport:
    """Fit TLS-only, spin-bath-only and full spectral-diffusion models."""
    _check_sd(curve, t0)
    rep = SubmodelReport()
    for m in ("sd_tls_only", "sd_bath_only", "spectral_diffusion"):
        rep.results[m] = fit(curve, m, t0=t0, **kw)
    return rep


def fit_recovery(curve: SweepCurve, **kw) -> FitResult:
    """Double-exponential recovery; the shorter constant is reported first."""
    return fit(curve, "recovery_2exp", **kw)


def fit_lorentzian_peak(curve: SweepCurve, **kw) -> FitResult:
    return fit(curve, "lorentzian", **kw)


def fit_linear_broadening(curve: SweepCurve, **kw) -> FitResult:
    """Straight line gamma0' + alpha T.

    Two points determine the line exactly; that case is solved directly and
    the covariance is reported as NaN (no residual degrees of freedom).
    """
    if len(curve) == 2 and not kw:
        _check_curve(curve, 2, n_min=2)
        x, y = curve.abscissa, curve.ordinate
        if x[0] == x[1]:
            raise FitError("two-point line needs distinct abscissae")
        alpha = (y[1] - y[0]) / (x[1] - x[0])
        g0 = y[0] - alpha * x[0]
        return FitResult("linear_broadening", {"gamma0p": float(g0), "alpha": float(alpha)},
                         np.full((2, 2), math.nan), 0.0, 2, True, ("gamma0p", "alpha"),
                         "exactly determined", {"free": ["gamma0p", "alpha"]})
    return fit(curve, "linear_broadening", **kw)


def fit_stark_modulation(curve: SweepCurve, kernel="sin4", **kw) -> FitResult:
    """Fit a0 * A(area; k) with abscissa = Stark pulse area (V s / m)."""
    if len(curve) < 5:
        raise FitError(f"Stark fits need >= 5 pulse-area points (got {len(curve)})")
    from ..core import DipoleKernel
    kid = {DipoleKernel.SIN4: "stark_sin4", DipoleKernel.COS4: "stark_cos4"}.get(DipoleKernel(kernel))
    if kid is None:
        raise FitError(f"no Stark fit model for kernel {kernel!r}")
    return fit(curve, kid, **kw)
