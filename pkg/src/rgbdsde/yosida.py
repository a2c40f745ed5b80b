"""Yosida regularization of nonincreasing scalar maps and generator truncation."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import BracketError, ConfigurationError

RESOLVENT_TOL = 1e-12
MAX_DOUBLINGS = 60
MAX_ITERS = 200


def monotone_root(F: Callable, target, x0=None, scale=None, tol: float = RESOLVENT_TOL):
    """Solve F(x) = target elementwise for a strictly increasing F.

    Safeguarded Newton on a bracket that is grown by doubling. F must accept
    and return arrays of the same shape as target.
    """
    y = np.asarray(target, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y).astype(float)
    x = y.copy() if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    x = np.broadcast_to(x, y.shape).copy()
    width = np.ones_like(y) if scale is None else np.maximum(np.atleast_1d(np.abs(scale)), 1e-12)
    width = np.broadcast_to(width, y.shape).copy()
    lo, hi = x - width, x + width
    Flo, Fhi = F(lo) - y, F(hi) - y
    for _ in range(MAX_DOUBLINGS):
        bad_lo = Flo > 0
        bad_hi = Fhi < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        width = np.where(bad_lo | bad_hi, 2 * width, width)
        lo = np.where(bad_lo, x - width, lo)
        hi = np.where(bad_hi, x + width, hi)
        if bad_lo.any():
            Flo = np.where(bad_lo, F(lo) - y, Flo)
        if bad_hi.any():
            Fhi = np.where(bad_hi, F(hi) - y, Fhi)
    else:
        if (Flo > 0).any() or (Fhi < 0).any() or not np.all(np.isfinite(Flo) & np.isfinite(Fhi)):
            raise BracketError("root bracket not found after 60 doublings; is the map monotone?")
    x = np.clip(x, lo, hi)
    thresh = tol * (1.0 + np.abs(y))
    for _ in range(MAX_ITERS):
        r = F(x) - y
        done = np.abs(r) <= thresh
        if done.all():
            break
        lo = np.where(r < 0, x, lo)
        hi = np.where(r > 0, x, hi)
        h = 1e-7 * (1.0 + np.abs(x))
        slope = (F(x + h) - F(x - h)) / (2 * h)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - r / slope
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi) & (slope > 0)
        x_new = np.where(ok, newton, 0.5 * (lo + hi))
        # stop where the bracket has collapsed to rounding level
        tiny = (hi - lo) <= 4 * np.spacing(np.maximum(np.abs(lo), np.abs(hi)))
        x = np.where(done | tiny, x, x_new)
        if np.all(done | tiny):
            break
    return float(x[0]) if scalar else x


def yosida_resolvent(phi: Callable, y, delta: float):
    """J with J - delta*phi(J) = y for a nonincreasing phi (vectorized in y)."""
    if not delta > 0:
        raise ConfigurationError(f"Yosida parameter must be positive, got {delta}")
    y_arr = np.asarray(y, dtype=float)
    scale = delta * np.abs(np.asarray(phi(y_arr), dtype=float)) + 1e-3
    return monotone_root(lambda J: J - delta * np.asarray(phi(J), dtype=float), y_arr, x0=y_arr, scale=scale)


def yosida_apply(phi: Callable, y, delta: float):
    """phi_delta(y) = (J - y)/delta, evaluated as phi(J) which is the same quantity without cancellation."""
    J = yosida_resolvent(phi, y, delta)
    out = np.asarray(phi(J), dtype=float)
    return float(out) if np.ndim(y) == 0 else out


def truncate_generator(phi: Callable, p: float) -> Callable:
    """Replace phi(t, 0, ...) by its p-capped rescaling; phi takes (t, y, *rest)."""
    if p < 1:
        raise ConfigurationError("truncation level p must be >= 1")

    def capped(t, y, *rest):
        at0 = np.asarray(phi(t, np.zeros_like(np.asarray(y, dtype=float)), *rest), dtype=float)
        mag = np.abs(at0)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(mag > 0, np.minimum(mag, p) / np.where(mag > 0, mag, 1.0), 1.0)
        return np.asarray(phi(t, y, *rest), dtype=float) - at0 + factor * at0

    capped.p = p
    capped.base = phi
    return capped


def yosida_property_suite(phi: Callable, n: int = 1000, seed: int = 0, tol: float = 1e-9,
                          y_range: float = 3.0, deltas=(0.05, 2.0)) -> dict:
    """Check the monotonicity, Lipschitz, domination, convergence and cross inequalities on random tuples."""
    rng = np.random.default_rng(seed)
    y = rng.uniform(-y_range, y_range, n)
    yp = rng.uniform(-y_range, y_range, n)
    d = rng.uniform(*deltas, n)
    r = rng.uniform(*deltas, n)
    fd_y = np.array([yosida_apply(phi, y[i], d[i]) for i in range(n)])
    fd_yp = np.array([yosida_apply(phi, yp[i], d[i]) for i in range(n)])
    fr_yp = np.array([yosida_apply(phi, yp[i], r[i]) for i in range(n)])
    J = np.array([yosida_resolvent(phi, y[i], d[i]) for i in range(n)])
    resid = np.abs(J - d * phi(J) - y) / (1 + np.abs(y))
    scale = 1.0 + np.abs(fd_y) * np.abs(y - yp)
    mono = (y - yp) * (fd_y - fd_yp)
    lip = np.abs(fd_y - fd_yp) - 2.0 / d * np.abs(y - yp)
    dom = np.abs(fd_y) - np.abs(phi(y))
    cross = (y - yp) * (fd_y - fr_yp) - (d + r) * fd_y * fr_yp
    cross_scale = 1.0 + np.abs(y - yp) * (np.abs(fd_y) + np.abs(fr_yp)) + (d + r) * np.abs(fd_y * fr_yp)
    small = np.array([yosida_apply(phi, y[i], 1e-7) for i in range(min(n, 200))])
    conv = np.abs(small - phi(y[: small.size])) / (1 + np.abs(phi(y[: small.size])))
    return {
        "monotone": bool(np.all(mono <= tol * scale)),
        "lipschitz": bool(np.all(lip <= tol * scale)),
        "domination": bool(np.all(dom <= tol * (1 + np.abs(phi(y))))),
        "convergence": bool(np.all(conv <= 1e-4)),
        "cross": bool(np.all(cross <= tol * cross_scale)),
        "max_resolvent_residual": float(resid.max()),
        "resolvent_ok": bool(resid.max() <= RESOLVENT_TOL),
        "n": n,
    }
