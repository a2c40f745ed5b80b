"""Forward SDE driven by L and reflected inward along the normal of a smooth domain.

Only the continuous part of each step is reflected (interval clamp or radial
pull-back). Jumps must keep the state inside the closed domain; a jump that
leaves it raises JumpInvarianceError instead of being projected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, JumpInvarianceError, StepSizeError
from .levy import LevyCharacteristics
from .paths import PathBatch, TimeGrid

INVARIANCE_TOL = 1e-12


@dataclass(frozen=True)
class SmoothDomain:
    """G = {psi > 0}. Presets carry exact projections; custom domains evaluate only."""

    dim: int
    preset: str
    params: tuple
    sphere_constant: float
    psi_fn: Optional[Callable] = None
    grad_fn: Optional[Callable] = None

    def _as_points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return x

    def psi(self, x):
        x = self._as_points(x)
        if self.preset == "interval":
            a, b = self.params
            return ((x[..., 0] - a) * (b - x[..., 0])) / (b - a)
        if self.preset == "ball":
            c, R = self.params
            return (R**2 - np.sum((x - c) ** 2, axis=-1)) / (2 * R)
        return np.asarray(self.psi_fn(x), dtype=float)

    def grad(self, x) -> np.ndarray:
        x = self._as_points(x)
        if self.preset == "interval":
            a, b = self.params
            return (a + b - 2 * x) / (b - a)
        if self.preset == "ball":
            c, R = self.params
            return -(x - c) / R
        return np.asarray(self.grad_fn(x), dtype=float)

    def distance_to_boundary(self, x) -> np.ndarray:
        x = self._as_points(x)
        if self.preset == "interval":
            a, b = self.params
            return np.minimum(x[..., 0] - a, b - x[..., 0])
        if self.preset == "ball":
            c, R = self.params
            return R - np.linalg.norm(x - c, axis=-1)
        raise ConfigurationError("distance to the boundary is only available for preset domains")

    def contains(self, x, tol: float = INVARIANCE_TOL) -> np.ndarray:
        return self.psi(x) >= -tol

    def sample(self, n: int, rng: np.random.Generator, boundary_fraction: float = 0.2) -> np.ndarray:
        """Points of the closed domain, some of them on the boundary."""
        nb = int(n * boundary_fraction)
        if self.preset == "interval":
            a, b = self.params
            inner = np.linspace(a, b, n - nb)
            bnd = np.where(np.arange(nb) % 2 == 0, a, b)
            return np.concatenate([inner, bnd])[:, None]
        if self.preset == "ball":
            c, R = self.params
            v = rng.standard_normal((n, self.dim))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            rad = np.ones(n)
            rad[nb:] = rng.random(n - nb) ** (1.0 / self.dim)
            return c + R * rad[:, None] * v
        raise ConfigurationError("sampling is only available for preset domains")


def make_domain(preset: str, *args, sphere_constant: Optional[float] = None, psi=None, grad=None, dim: int = 1) -> SmoothDomain:
    """interval(a, b), ball(center, radius) or custom(psi, grad) for evaluation only."""
    if preset == "interval":
        a, b = (float(v) for v in args)
        if not a < b:
            raise ConfigurationError(f"interval needs a < b, got ({a}, {b})")
        m = 2.0 * (b - a) if sphere_constant is None else float(sphere_constant)
        return SmoothDomain(1, "interval", (a, b), m)
    if preset == "ball":
        center, radius = args
        center = np.atleast_1d(np.asarray(center, dtype=float))
        radius = float(radius)
        if not radius > 0:
            raise ConfigurationError(f"ball radius must be positive, got {radius}")
        m = 2.0 * radius if sphere_constant is None else float(sphere_constant)
        return SmoothDomain(center.size, "ball", (center, radius), m)
    if preset == "custom":
        if psi is None or grad is None:
            raise ConfigurationError("custom domains need psi and grad callables")
        return SmoothDomain(int(dim), "custom", (), float(sphere_constant or 1.0), psi, grad)
    raise ConfigurationError(f"unknown domain preset {preset!r}")


def interior_sphere_check(domain: SmoothDomain, n_pairs: int = 1000, seed: int = 0) -> tuple:
    """Evaluate |x'-x|^2 + m <grad psi(x), x'-x> on sampled (boundary x, closed-domain x') pairs."""
    rng = np.random.default_rng(seed)
    if domain.preset == "interval":
        a, b = domain.params
        xb = np.where(rng.random(n_pairs) < 0.5, a, b)[:, None]
        xp = (a + (b - a) * rng.random(n_pairs))[:, None]
    else:
        xb = domain.sample(n_pairs, rng, boundary_fraction=1.0)
        xp = domain.sample(n_pairs, rng, boundary_fraction=0.1)
    diff = xp - xb
    vals = np.sum(diff**2, axis=1) + domain.sphere_constant * np.sum(domain.grad(xb) * diff, axis=1)
    return bool(np.all(vals >= -1e-12)), float(vals.min())


def step_reflect(domain: SmoothDomain, x, increment):
    """Move x by increment and pull back along the inward normal if the result leaves the domain.

    Vectorized over leading axes; returns (new point, delta kappa).
    """
    x = domain._as_points(x)
    inc = domain._as_points(increment)
    y = x + inc
    if domain.preset == "interval":
        a, b = domain.params
        ys = np.clip(y, a, b)
        dk = np.abs(y - ys)[..., 0]
        return ys, dk
    if domain.preset == "ball":
        c, R = domain.params
        if np.any(np.linalg.norm(inc, axis=-1) >= R):
            raise StepSizeError("increment at least one radius long; refine the time grid")
        r = np.linalg.norm(y - c, axis=-1)
        out = r > R
        dk = np.where(out, r - R, 0.0)
        scale = np.where(out, R / np.where(out, r, 1.0), 1.0)
        ys = c + (y - c) * scale[..., None]
        return ys, dk
    raise ConfigurationError("stepping requires a preset domain (interval or ball)")


@dataclass(frozen=True)
class ReflectedPaths:
    """Reflected state and boundary local time for every path of a batch."""

    X: np.ndarray
    kappa: np.ndarray
    dkappa: np.ndarray
    reflect_point_dist: np.ndarray
    start_dist: np.ndarray
    boundary_tol: float
    start_index: int
    domain: SmoothDomain

    def state(self) -> np.ndarray:
        """State values for driver evaluation: (n, N+1) in 1D, (n, N+1, l) otherwise."""
        return self.X[..., 0] if self.X.shape[-1] == 1 else self.X

    def path(self, k: int) -> dict:
        return {"X": self.X[k], "kappa": self.kappa[k], "dkappa": self.dkappa[k]}

    def complementarity_defect(self) -> float:
        """sum of dkappa over intervals whose start lies farther than boundary_tol from the boundary."""
        far = self.start_dist > self.boundary_tol
        return float(np.sum(self.dkappa * far))

    def min_psi(self) -> float:
        return float(np.min(self.domain.psi(self.X)))


def _sigma_values(sigma, X: np.ndarray) -> np.ndarray:
    val = sigma(X[:, 0] if X.shape[1] == 1 else X)
    val = np.asarray(val, dtype=float)
    if val.ndim <= 1:
        val = np.broadcast_to(val.reshape(-1, 1) if val.ndim == 1 else val, (X.shape[0], 1))
    return np.broadcast_to(val, X.shape)


def check_jump_invariance(domain: SmoothDomain, chars: LevyCharacteristics, sigma, n_samples: int = 2001, seed: int = 0) -> None:
    if not chars.n_atoms:
        return
    rng = np.random.default_rng(seed)
    xs = domain.sample(n_samples, rng)
    sig = _sigma_values(sigma, xs)
    for e in chars.sizes:
        y = xs + sig * e
        bad = ~domain.contains(y)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise JumpInvarianceError(xs[k].tolist(), float(e))


def solve_paths(
    domain: SmoothDomain,
    chars: LevyCharacteristics,
    basis,
    grid: TimeGrid,
    sigma: Callable,
    start: tuple,
    batch: PathBatch,
) -> ReflectedPaths:
    """Euler scheme with continuous reflection; jumps applied in time order inside each interval."""
    t0, x0 = start
    nodes = grid.nodes
    hit = np.flatnonzero(np.isclose(nodes, float(t0), rtol=0, atol=1e-12))
    if hit.size == 0:
        raise ConfigurationError(f"start time {t0} is not a grid node")
    i0 = int(hit[0])
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != domain.dim:
        raise ConfigurationError(f"start point has dimension {x0.size}, domain has {domain.dim}")
    if not domain.contains(x0[None, :])[0]:
        raise ConfigurationError(f"start point {x0.tolist()} is outside the closed domain")
    check_jump_invariance(domain, chars, sigma)
    n, N = batch.n_paths, batch.n_steps
    l = domain.dim
    X = np.empty((n, N + 1, l))
    X[:, : i0 + 1] = x0
    dk = np.zeros((n, N))
    refl_dist = np.zeros((n, N))
    start_dist = np.zeros((n, N))
    cont = batch.continuous_increment()
    # rank of each event inside its (path, interval) group
    ev_p, ev_s, ev_a = batch.ev_path, batch.ev_step, batch.ev_atom
    group = ev_p * N + ev_s
    if group.size:
        first = np.r_[True, group[1:] != group[:-1]]
        idx = np.arange(group.size)
        starts = np.maximum.accumulate(np.where(first, idx, 0))
        rank = idx - starts
    else:
        rank = np.zeros(0, dtype=np.int64)
    sizes = batch.sizes
    # events sorted by (path, time) hence by (path, step); bucket by step
    step_order = np.argsort(ev_s, kind="stable")
    step_bounds = np.searchsorted(ev_s[step_order], np.arange(N + 1))
    max_inc = 0.0
    cur = X[:, i0].copy()
    for i in range(i0, N):
        start_dist[:, i] = domain.distance_to_boundary(cur)
        sig = _sigma_values(sigma, cur)
        inc = sig * cont[:, i : i + 1]
        if inc.size:
            max_inc = max(max_inc, float(np.max(np.linalg.norm(inc, axis=1))))
        cur, dk[:, i] = step_reflect(domain, cur, inc)
        refl_dist[:, i] = domain.distance_to_boundary(cur)
        sel = step_order[step_bounds[i] : step_bounds[i + 1]]
        if sel.size:
            rk = rank[sel]
            for r in range(int(rk.max()) + 1):
                ev = sel[rk == r]
                p = ev_p[ev]
                e = sizes[ev_a[ev]]
                xp = cur[p]
                y = xp + _sigma_values(sigma, xp) * e[:, None]
                bad = ~domain.contains(y)
                if np.any(bad):
                    k = int(np.flatnonzero(bad)[0])
                    raise JumpInvarianceError(xp[k].tolist(), float(e[k]))
                if domain.preset == "interval":
                    y = np.clip(y, *domain.params)
                cur[p] = y
        X[:, i + 1] = cur
    kappa = np.zeros((n, N + 1))
    np.cumsum(dk, axis=1, out=kappa[:, 1:])
    return ReflectedPaths(
        X=X, kappa=kappa, dkappa=dk, reflect_point_dist=refl_dist, start_dist=start_dist,
        boundary_tol=max(max_inc, 1e-9), start_index=i0, domain=domain,
    )


def truncate_small_jumps(chars: LevyCharacteristics, n: int) -> LevyCharacteristics:
    """Drop atoms with |e| <= 1/n.

    Small atoms enter L compensated, so removing them needs no extra drift
    under this package's convention for L.
    """
    if n < 1:
        raise ConfigurationError("truncation level n must be >= 1")
    keep = [a for a in chars.atoms if abs(a.size) > 1.0 / n]
    return chars.with_atoms(keep)


def moment_report(paths: ReflectedPaths, p: float = 4.0, mu: float = 1.0) -> dict:
    """Empirical sup-moment of X and exponential moment of the local time."""
    sup = np.max(np.linalg.norm(paths.X, axis=-1), axis=1) ** p
    ex = np.exp(mu * paths.kappa[:, -1])
    n = sup.size
    return {
        "p": p,
        "mu": mu,
        "sup_moment": float(sup.mean()),
        "sup_moment_se": float(sup.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        "exp_kappa_moment": float(ex.mean()),
        "exp_kappa_moment_se": float(ex.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        "finite": bool(np.isfinite(sup.mean()) and np.isfinite(ex.mean())),
    }


def continuity_constant(domain, chars, basis, grid, sigma, t, x, separations, batch) -> dict:
    """Fit C in E sup|X^x - X^x'|^2 <= C |x - x'|^2 from coupled runs."""
    base = solve_paths(domain, chars, basis, grid, sigma, (t, x), batch)
    ratios = []
    for h in separations:
        xp = np.atleast_1d(np.asarray(x, dtype=float)) + h
        other = solve_paths(domain, chars, basis, grid, sigma, (t, xp), batch)
        d2 = np.max(np.sum((other.X - base.X) ** 2, axis=-1), axis=1).mean()
        ratios.append(float(d2 / (h**2 * domain.dim)))
    return {"separations": list(map(float, separations)), "ratios": ratios, "C": max(ratios)}
