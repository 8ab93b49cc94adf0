"""Box-constrained Levenberg-Marquardt least squares."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["LMResult", "levenberg_marquardt"]

_TINY = 1e-300


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    residuals: np.ndarray
    jacobian: np.ndarray
    converged: bool
    message: str
    n_iter: int
    damping: float
    scale: np.ndarray  # Marquardt diagonal (squared column norms), unscaled params


def _free_mask(p, lo, hi, grad):
    # a parameter pinned at a bound with the descent direction pointing
    # outward is held fixed for this step
    at_lo = (p <= lo) & (grad > 0)
    at_hi = (p >= hi) & (grad < 0)
    return ~(at_lo | at_hi)


def _gradient_cosine(Js, r, lo, hi, x) -> float:
    """Largest |cos| between the residual and a free Jacobian column."""
    g = Js.T @ r
    free = _free_mask(x, lo, hi, g)
    den = np.linalg.norm(Js, axis=0) * np.linalg.norm(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(den > 0, np.abs(g) / den, 0.0)
    return float(np.max(c[free])) if np.any(free) else 0.0


def levenberg_marquardt(fun, jac, x0, lower, upper, *, max_iter: int = 500,
                        xtol: float = 1e-8, ftol: float = 1e-8, names=None,
                        data_norm2: float | None = None) -> LMResult:
    """Minimise 0.5 ||fun(x)||^2 subject to lower <= x <= upper.

    Damping follows Nielsen's update with Marquardt's diagonal scaling and
    steps are projected onto the box.  The fit counts as converged when an
    accepted step is below ``xtol`` relative to x and the cost fell by less
    than ``ftol`` relative; a residual that vanishes to rounding level also
    counts; ``data_norm2`` (squared norm of the weighted data) sets that
    rounding level and defaults to the starting residual.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    x = np.clip(np.asarray(x0, dtype=float), lo, hi)
    names = list(names) if names is not None else [f"p{i}" for i in range(x.size)]
    # fixed column scaling keeps the normal equations well conditioned when
    # parameters differ by many orders of magnitude
    s = np.where(np.abs(x) > 0, np.abs(x), 1.0)

    r = np.asarray(fun(x), dtype=float)
    J = np.asarray(jac(x), dtype=float)
    if not np.all(np.isfinite(r)) or not np.all(np.isfinite(J)):
        return LMResult(x, math.inf, r, J, False, "non-finite residual or Jacobian at start",
                        0, math.inf, np.zeros_like(x))
    y_scale = float(np.dot(r, r)) if data_norm2 is None else float(data_norm2)
    y_scale = max(y_scale, _TINY)
    cost = 0.5 * float(np.dot(r, r))
    col = np.linalg.norm(J, axis=0)
    dead = [names[i] for i in np.flatnonzero(col == 0.0)]
    if dead:
        return LMResult(x, cost, r, J, False,
                        f"singular Jacobian at start: no sensitivity to {', '.join(dead)}",
                        0, math.inf, col ** 2)

    Js = J * s
    diag = np.maximum(np.sum(Js * Js, axis=0), _TINY)
    lam = 1e-3
    nu = 2.0
    message = f"iteration limit ({max_iter}) reached"
    converged = False
    it = 0
    last_rel_drop = math.inf
    for it in range(1, max_iter + 1):
        g = Js.T @ r
        free = _free_mask(x, lo, hi, g / s)
        if not np.any(free):
            converged, message = True, "all parameters pinned at bounds"
            break
        if cost <= 1e-30 * y_scale or not np.any(g[free]):
            converged, message = True, "residual vanished"
            break
        Jf = Js[:, free]
        d = np.sqrt(lam * diag[free])
        A = np.vstack([Jf, np.diag(d)])
        b = np.concatenate([-r, np.zeros(d.size)])
        hs, *_ = np.linalg.lstsq(A, b, rcond=None)
        step = np.zeros_like(x)
        step[free] = hs * s[free]
        x_new = np.clip(x + step, lo, hi)
        h = x_new - x
        r_new = np.asarray(fun(x_new), dtype=float) if np.any(h) else r
        cost_new = 0.5 * float(np.dot(r_new, r_new)) if np.all(np.isfinite(r_new)) else math.inf
        J_new = np.asarray(jac(x_new), dtype=float) if math.isfinite(cost_new) else None
        if J_new is None or not np.all(np.isfinite(J_new)) or not np.any(h):
            cost_new = math.inf
        hsc = h / s
        Jh = Js @ hsc
        pred = -(float(g @ hsc) + 0.5 * float(Jh @ Jh))
        rho = (cost - cost_new) / pred if pred > 0 else -1.0
        if rho > 0 and cost_new <= cost:
            rel_step = float(np.linalg.norm(h) / (np.linalg.norm(x) + _TINY))
            rel_drop = (cost - cost_new) / max(cost, _TINY)
            last_rel_drop = rel_drop
            x, r, cost, J = x_new, r_new, cost_new, J_new
            Js = J * s
            diag = np.maximum(diag, np.sum(Js * Js, axis=0))
            lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if rel_step < xtol and (rel_drop < ftol or cost <= 1e-28 * y_scale):
                converged, message = True, "relative step and cost change below tolerance"
                break
            if cost <= 1e-30 * y_scale and rel_step < math.sqrt(xtol):
                converged, message = True, "residual vanished"
                break
        else:
            lam *= nu
            nu *= 2.0
            if lam > 1e30:
                # no step improves the cost at working precision
                if (last_rel_drop < ftol or cost <= 1e-28 * y_scale
                        or _gradient_cosine(Js, r, lo, hi, x) < 1e-8):
                    converged, message = True, "stalled at a minimum (rounding limit)"
                else:
                    message = "damping exhausted without convergence"
                break
    return LMResult(x, cost, r, J, converged, message, it, lam, np.sum(J * J, axis=0))
