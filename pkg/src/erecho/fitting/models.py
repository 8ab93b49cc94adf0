"""Registry of named fit models.

Each model carries its parameter names, box bounds, a vectorised model
function, an analytic Jacobian and an initialiser that turns any valid
curve into an in-bounds starting point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..analytic import stark_amplitude_dk, stark_echo_amplitude
from ..quadrature import order_for_phase

__all__ = ["ModelSpec", "MODELS", "get_model", "UnknownModel", "check_jacobian"]

_POS = np.finfo(float).tiny
R_MAX = 1e6


class UnknownModel(KeyError):
    def __init__(self, model_id):
        self.model_id = model_id
        super().__init__(f"unknown model_id {model_id!r}; known: {', '.join(sorted(MODELS))}")

    def __str__(self):
        return self.args[0]


@dataclass(frozen=True)
class ModelSpec:
    """A fit model.

    ``func(x, p, ctx)`` and ``jac(x, p, ctx)`` take the parameter vector in
    ``param_names`` order; ``ctx`` holds per-fit options resolved by
    ``context(curve, **options)`` (for example t0 or the dipole kernel).
    """

    model_id: str
    param_names: tuple
    lower: tuple
    upper: tuple
    func: Callable
    jac: Callable
    init: Callable
    context: Callable = field(default=lambda curve, **o: dict(o))
    fixed_default: dict = field(default_factory=dict)
    restarts: Callable | None = None  # ctx, p0 -> list of alternative starts
    description: str = ""
    scale_params: tuple = ()  # parameters proportional to the ordinate
    step_scale: dict = field(default_factory=dict)  # location param -> its width param

    def __post_init__(self):
        if len(self.param_names) < 1:
            raise ValueError("a model needs at least one parameter")
        if not (len(self.lower) == len(self.upper) == len(self.param_names)):
            raise ValueError("bounds must match parameter count")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError(f"bounds of {self.model_id} are not ordered")

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def evaluate(self, x, params, **options):
        """Model values at ``x`` for a parameter mapping or sequence."""
        p = self._vector(params)
        return self.func(np.asarray(x, dtype=float), p, self._ctx_for(x, options))

    def jacobian(self, x, params, **options):
        p = self._vector(params)
        return self.jac(np.asarray(x, dtype=float), p, self._ctx_for(x, options))

    def _ctx_for(self, x, options):
        from ..core import SweepCurve
        xs = np.asarray(x, dtype=float)
        dummy = SweepCurve(xs, np.zeros_like(xs))
        return self.context(dummy, **options)

    def _vector(self, params) -> np.ndarray:
        if isinstance(params, dict):
            merged = {**self.fixed_default, **params}
            return np.array([merged[n] for n in self.param_names], dtype=float)
        return np.asarray(params, dtype=float)


# --------------------------------------------------------------------------
# helpers for initialisers


def _loglin(x, y):
    """Slope and intercept of log(y) vs x over positive y (None if < 2 points)."""
    ok = y > 0
    if np.count_nonzero(ok) < 2:
        return None
    slope, icpt = np.polyfit(x[ok], np.log(y[ok]), 1)
    return float(slope), float(icpt)


def _span(x) -> float:
    return float(np.max(x) - np.min(x)) or float(abs(np.max(x))) or 1.0


# --------------------------------------------------------------------------
# echo decay  I0 exp(-(4 tau / T2)^x)


def _decay_f(t, p, ctx):
    i0, t2, x = p
    z = 4.0 * t / t2
    return i0 * np.exp(-np.power(z, x))


def _decay_j(t, p, ctx):
    i0, t2, x = p
    z = 4.0 * t / t2
    zx = np.power(z, x)
    e = np.exp(-zx)
    with np.errstate(divide="ignore", invalid="ignore"):
        lnz = np.where(z > 0, np.log(np.where(z > 0, z, 1.0)), 0.0)
    return np.column_stack([e, i0 * e * x * zx / t2, -i0 * e * zx * lnz])


def _decay_init(curve, ctx):
    t, y = curve.abscissa, curve.ordinate
    order = np.argsort(t)
    t, y = t[order], y[order]
    y0 = y[0]
    t2 = None
    if y0 > 0:
        below = np.flatnonzero(y <= y0 / math.e)
        if below.size and below[0] > 0:
            j = below[0]
            # interpolate the 1/e crossing in log space
            y_hi, y_lo = y[j - 1], max(y[j], 1e-300 * y0)
            frac = (math.log(y_hi) - math.log(y0 / math.e)) / (math.log(y_hi) - math.log(y_lo))
            te = t[j - 1] + frac * (t[j] - t[j - 1])
            if te > t[0]:
                t2 = 4.0 * (te - t[0])
    if t2 is None:
        fit = _loglin(t, y)
        t2 = -4.0 / fit[0] if fit and fit[0] < 0 else 4.0 * _span(t)
    i0 = (y0 if y0 > 0 else float(np.max(np.abs(y))) or 1.0) * math.exp(4.0 * t[0] / t2)
    return np.array([i0, t2, 1.0])


# --------------------------------------------------------------------------
# spectral diffusion families


def _sd_ctx(curve, t0=None, **_):
    t0 = float(np.min(curve.abscissa)) if t0 is None else float(t0)
    if not t0 > 0:
        raise ValueError("t0 must be > 0")
    return {"t0": t0}


def _sd_full_f(t, p, ctx):
    g0, gsd, r, gtls = p
    return g0 + 0.5 * gsd * -np.expm1(-r * t) + gtls * np.log(t / ctx["t0"])


def _sd_full_j(t, p, ctx):
    g0, gsd, r, gtls = p
    return np.column_stack([np.ones_like(t), 0.5 * -np.expm1(-r * t),
                            0.5 * gsd * t * np.exp(-r * t), np.log(t / ctx["t0"])])


def _sd_bath_f(t, p, ctx):
    g0, gsd, r = p
    return g0 + 0.5 * gsd * -np.expm1(-r * t)


def _sd_bath_j(t, p, ctx):
    return _sd_full_j(t, np.append(p, 0.0), ctx)[:, :3]


def _sd_tls_f(t, p, ctx):
    g0, gtls = p
    return g0 + gtls * np.log(t / ctx["t0"])


def _sd_tls_j(t, p, ctx):
    return np.column_stack([np.ones_like(t), np.log(t / ctx["t0"])])


def _sd_basics(curve):
    t, y = curve.abscissa, curve.ordinate
    j = int(np.argmin(t))
    g0 = max(float(y[j]), 0.0)
    rng = float(np.max(y) - np.min(y))
    r0 = 1.0 / float(np.median(t))
    return t, y, g0, rng, min(r0, R_MAX)


def _sd_linear_part(curve, ctx, rate, tls: bool):
    # for fixed R the law is linear in (gamma0, gamma_SD[, gamma_TLS]);
    # solve that part exactly under the nonnegativity bounds
    from scipy.optimize import nnls

    t, y = curve.abscissa, curve.ordinate
    w = 1.0 / curve.sigma if curve.sigma is not None else np.ones_like(y)
    cols = [np.ones_like(t), 0.5 * -np.expm1(-rate * t)]
    if tls:
        cols.append(np.log(t / ctx["t0"]))
    A = np.column_stack(cols) * w[:, None]
    norms = np.linalg.norm(A, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    coef, _ = nnls(A / norms, y * w)
    coef = coef / norms
    out = [coef[0], coef[1], rate]
    if tls:
        out.append(coef[2])
    return np.array(out)


def _sd_full_init(curve, ctx):
    t, y, g0, rng, r0 = _sd_basics(curve)
    return _sd_linear_part(curve, ctx, r0, tls=True)


def _sd_bath_init(curve, ctx):
    t, y, g0, rng, r0 = _sd_basics(curve)
    return _sd_linear_part(curve, ctx, r0, tls=False)


def _sd_tls_init(curve, ctx):
    t, y, g0, rng, r0 = _sd_basics(curve)
    lt = math.log(float(np.max(t)) / ctx["t0"]) or 1.0
    return np.array([g0, max(rng / lt, 0.0)])


def _rate_restarts(tls: bool):
    def starts(curve, ctx, p0):
        t = curve.abscissa
        # reaches well below 1/T_W so a nearly linear rise is also tried
        lo, hi = 0.01 / float(np.max(t)), 10.0 / float(np.min(t))
        return [_sd_linear_part(curve, ctx, r, tls)
                for r in np.geomspace(lo, min(hi, R_MAX), 9)]
    return starts


# --------------------------------------------------------------------------
# double-exponential recovery


def _rec_f(t, p, ctx):
    a_inf, a_s, t_s, a_l, t_l = p
    # trial steps can push a time constant towards 0; exp(-inf) = 0 is fine
    with np.errstate(over="ignore"):
        return a_inf - a_s * np.exp(-t / t_s) - a_l * np.exp(-t / t_l)


def _rec_j(t, p, ctx):
    a_inf, a_s, t_s, a_l, t_l = p
    with np.errstate(invalid="ignore", over="ignore"):
        es, el = np.exp(-t / t_s), np.exp(-t / t_l)
        jac = np.column_stack([np.ones_like(t), -es, -a_s * es * t / t_s ** 2,
                               -el, -a_l * el * t / t_l ** 2])
    # 0 * inf where the exponential has underflowed
    return np.nan_to_num(jac, nan=0.0)


def _rec_init(curve, ctx):
    t, y = curve.abscissa, curve.ordinate
    order = np.argsort(t)
    t, y = t[order], y[order]
    n = t.size
    a_inf = float(y[-1])
    rise = a_inf - float(y[0])
    sgn = 1.0 if rise >= 0 else -1.0
    # the slow component lives in the late half; the knee separates them
    pad = 0.02 * abs(rise) if rise else 1e-12
    a_inf_g = a_inf + sgn * pad
    d = sgn * (a_inf_g - y)
    late = slice(n // 2, n)
    fit = _loglin(t[late], d[late])
    if fit and fit[0] < 0:
        t_l = -1.0 / fit[0]
        a_l = math.exp(fit[1])
    else:
        t_l = 0.5 * float(t[-1])
        a_l = 0.5 * abs(rise)
    rest = d - a_l * np.exp(-t / t_l)
    early = slice(0, max(2, n // 2))
    fit = _loglin(t[early], rest[early])
    if fit and fit[0] < 0 and -1.0 / fit[0] < t_l:
        t_s = -1.0 / fit[0]
        a_s = math.exp(fit[1])
    else:
        t_s = max(float(t[1] if n > 1 else t[0]), t_l / 30.0)
        a_s = 0.5 * abs(rise)
    if not t_s < t_l:
        t_s = t_l / 10.0
    return np.array([a_inf_g, sgn * a_s, t_s, sgn * a_l, t_l])


def _rec_restarts(curve, ctx, p0):
    t = curve.abscissa
    tmin = float(np.min(t[t > 0])) if np.any(t > 0) else _span(t) / 100
    tmax = float(np.max(t))
    out = []
    for ts in np.geomspace(tmin, tmax, 5)[:-1]:
        for tl in np.geomspace(ts * 5, tmax * 3, 3):
            q = p0.copy()
            q[2], q[4] = ts, tl
            out.append(q)
    return out


def _rec_post(p):
    # keep the short component first
    if p[2] > p[4]:
        return np.array([p[0], p[3], p[4], p[1], p[2]]), (0, 3, 4, 1, 2)
    return p, (0, 1, 2, 3, 4)


# --------------------------------------------------------------------------
# Lorentzian peak


def _lor_f(x, p, ctx):
    c, w, a, off = p
    hw2 = 0.25 * w * w
    return off + a * hw2 / ((x - c) ** 2 + hw2)


def _lor_j(x, p, ctx):
    c, w, a, off = p
    hw2 = 0.25 * w * w
    dx = x - c
    den = dx * dx + hw2
    shape = hw2 / den
    d_c = a * hw2 * 2.0 * dx / den ** 2
    d_w = a * (0.5 * w * den - hw2 * 0.5 * w) / den ** 2
    return np.column_stack([d_c, d_w, shape, np.ones_like(x)])


def _lor_init(curve, ctx):
    x, y = curve.abscissa, curve.ordinate
    order = np.argsort(x)
    x, y = x[order], y[order]
    j = int(np.argmax(y))
    off = float(min(y[0], y[-1]))
    amp = float(y[j]) - off
    half = off + 0.5 * amp
    above = np.flatnonzero(y >= half)
    width = float(x[above[-1]] - x[above[0]]) if above.size > 1 else 0.0
    if width <= 0:
        width = _span(x) / max(x.size, 2)
    return np.array([float(x[j]), width, amp if amp != 0 else 1.0, off])


# --------------------------------------------------------------------------
# linear broadening  gamma0' + alpha T


def _lin_f(x, p, ctx):
    return p[0] + p[1] * x


def _lin_j(x, p, ctx):
    return np.column_stack([np.ones_like(x), x])


def _lin_init(curve, ctx):
    x, y = curve.abscissa, curve.ordinate
    if np.ptp(x) == 0:
        return np.array([max(float(np.mean(y)), 0.0), 0.0])
    a, b = np.polyfit(x, y, 1)
    return np.array([max(float(b), 0.0), max(float(a), 0.0)])


# --------------------------------------------------------------------------
# Stark modulation  A0 * A(area; k)


def _stark_ctx(kernel):
    def ctx(curve, **opts):
        return {"kernel": kernel, "area_max": float(np.max(np.abs(curve.abscissa)))}
    return ctx


def _stark_order(p, ctx) -> int:
    return 2 * order_for_phase(2.0 * math.pi * abs(p[0]) * ctx["area_max"])


def _stark_f(a, p, ctx):
    k, a0 = p
    return a0 * stark_echo_amplitude(a, k, ctx["kernel"], order=_stark_order(p, ctx))


def _stark_j(a, p, ctx):
    k, a0 = p
    n = _stark_order(p, ctx)
    amp = stark_echo_amplitude(a, k, ctx["kernel"], order=n)
    amp = np.where(np.asarray(a) == 0, 1.0, amp)
    dk = stark_amplitude_dk(a, k, ctx["kernel"], n)
    return np.column_stack([a0 * dk, amp])


def _stark_init(curve, ctx):
    a, y = curve.abscissa, curve.ordinate
    pos = a[a > 0]
    if pos.size == 0:
        return np.array([0.0, float(np.mean(y))])
    ks = np.geomspace(0.01 / float(pos.max()), 20.0 / float(pos.min()), 400)
    best = (math.inf, ks[0], 1.0)
    for k in ks:
        m = _stark_f(a, np.array([k, 1.0]), ctx)
        mm = float(m @ m)
        a0 = float(m @ y) / mm if mm > 0 else 1.0
        res = float(np.sum((y - a0 * m) ** 2))
        if res < best[0]:
            best = (res, k, a0)
    return np.array([best[1], best[2]])


# --------------------------------------------------------------------------

_INF = math.inf

MODELS: dict[str, ModelSpec] = {
    "echo_decay": ModelSpec(
        "echo_decay", ("I0", "T2", "x"), (-_INF, _POS, 0.05), (_INF, _INF, 10.0),
        _decay_f, _decay_j, _decay_init, fixed_default={"x": 1.0},
        description="I0 exp(-(4 tau / T2)^x)", scale_params=("I0",)),
    "spectral_diffusion": ModelSpec(
        "spectral_diffusion", ("gamma0", "gamma_sd", "rate_r", "gamma_tls"),
        (0.0, 0.0, 0.0, 0.0), (_INF, _INF, R_MAX, _INF),
        _sd_full_f, _sd_full_j, _sd_full_init, context=_sd_ctx, restarts=_rate_restarts(True),
        description="gamma0 + gamma_SD/2 (1 - exp(-R T_W)) + gamma_TLS ln(T_W/t0)",
        scale_params=("gamma0", "gamma_sd", "gamma_tls")),
    "sd_tls_only": ModelSpec(
        "sd_tls_only", ("gamma0", "gamma_tls"), (0.0, 0.0), (_INF, _INF),
        _sd_tls_f, _sd_tls_j, _sd_tls_init, context=_sd_ctx,
        description="gamma0 + gamma_TLS ln(T_W/t0)", scale_params=("gamma0", "gamma_tls")),
    "sd_bath_only": ModelSpec(
        "sd_bath_only", ("gamma0", "gamma_sd", "rate_r"), (0.0, 0.0, 0.0), (_INF, _INF, R_MAX),
        _sd_bath_f, _sd_bath_j, _sd_bath_init, context=_sd_ctx, restarts=_rate_restarts(False),
        description="gamma0 + gamma_SD/2 (1 - exp(-R T_W))", scale_params=("gamma0", "gamma_sd")),
    "recovery_2exp": ModelSpec(
        "recovery_2exp", ("a_inf", "a_short", "t1_short", "a_long", "t1_long"),
        (-_INF, -_INF, _POS, -_INF, _POS), (_INF,) * 5,
        _rec_f, _rec_j, _rec_init, restarts=_rec_restarts,
        description="a_inf - a_short exp(-t/T1s) - a_long exp(-t/T1l)",
        scale_params=("a_inf", "a_short", "a_long")),
    "lorentzian": ModelSpec(
        "lorentzian", ("center", "fwhm", "amplitude", "offset"),
        (-_INF, _POS, -_INF, -_INF), (_INF,) * 4,
        _lor_f, _lor_j, _lor_init, description="offset + amplitude (w/2)^2 / ((x-c)^2 + (w/2)^2)",
        scale_params=("amplitude", "offset"), step_scale={"center": "fwhm"}),
    "linear_broadening": ModelSpec(
        "linear_broadening", ("gamma0p", "alpha"), (0.0, 0.0), (_INF, _INF),
        _lin_f, _lin_j, _lin_init, description="gamma0' + alpha T",
        scale_params=("gamma0p", "alpha")),
    "stark_sin4": ModelSpec(
        "stark_sin4", ("k", "a0"), (0.0, -_INF), (_INF, _INF),
        _stark_f, _stark_j, _stark_init, context=_stark_ctx("sin4"),
        description="a0 <cos(2 pi k area cos theta)>, sin^4 weight", scale_params=("a0",)),
    "stark_cos4": ModelSpec(
        "stark_cos4", ("k", "a0"), (0.0, -_INF), (_INF, _INF),
        _stark_f, _stark_j, _stark_init, context=_stark_ctx("cos4"),
        description="a0 <cos(2 pi k area cos theta)>, cos^4 weight", scale_params=("a0",)),
}

POSTPROCESS = {"recovery_2exp": _rec_post}


def check_jacobian(model, x, params, rel_step: float = 1e-6, **options) -> float:
    """Largest column-relative gap between the analytic Jacobian and central
    finite differences.

    Each parameter is stepped by ``rel_step`` times its magnitude, or times
    its width parameter for location parameters such as a peak centre.
    """
    spec = get_model(model)
    p = spec._vector(params)
    J = spec.jacobian(x, p, **options)
    worst = 0.0
    for i, name in enumerate(spec.param_names):
        ref = spec.step_scale.get(name)
        typical = abs(p[spec.param_names.index(ref)]) if ref else abs(p[i])
        h = rel_step * (typical if typical > 0 else 1.0)
        a, b = p.copy(), p.copy()
        a[i] += h
        b[i] -= h
        fd = (spec.evaluate(x, a, **options) - spec.evaluate(x, b, **options)) / (2 * h)
        denom = float(np.max(np.abs(fd)))
        if denom == 0.0:
            denom = 1.0
        worst = max(worst, float(np.max(np.abs(J[:, i] - fd))) / denom)
    return worst


def get_model(model) -> ModelSpec:
    if isinstance(model, ModelSpec):
        return model
    try:
        return MODELS[model]
    except KeyError:
        raise UnknownModel(model) from None
