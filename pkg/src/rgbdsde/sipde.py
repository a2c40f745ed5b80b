"""Probabilistic representation of the obstacle integro-PDE with nonlinear Neumann boundary.

u(t, x) is the time-t value of the reflected generalized BDSDE started from x
at t, driven by the reflected forward path and its boundary local time. A 1D
finite-difference solver of the deterministic (g = 0) problem serves as an
independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.linalg import solve_banded

from .bdsde import DriverSet, RGBDSDEProblem, SolverConfig, solve
from .errors import ConfigurationError, NumericalError
from .levy import LevyCharacteristics
from .paths import TimeGrid, simulate_batch
from .reflection import SmoothDomain, moment_report, solve_paths

_ZERO_TOL = 1e-14


@dataclass
class SIPDEProblem:
    domain: SmoothDomain
    chars: LevyCharacteristics
    sigma: Callable
    drivers: DriverSet
    terminal: Callable
    obstacle: Optional[Callable] = None
    growth_C: float = 10.0
    growth_p: float = 2.0

    def __post_init__(self):
        ts = self.chars.sample_times()
        if np.any(np.abs(np.asarray(self.chars.diffusion(ts), dtype=float)) > _ZERO_TOL):
            raise ConfigurationError("the integro-PDE model has no Brownian part in L: set c = 0")
        if np.any(np.abs(self.chars.sizes) > 1.0):
            raise ConfigurationError("the integro-PDE model needs bounded jumps |e| <= 1")
        xs = self.x_probe()
        H = np.asarray(self.terminal(xs), dtype=float)
        if np.any(np.abs(H) > self.growth_C * (1 + np.abs(xs) ** self.growth_p)):
            raise ConfigurationError("terminal data violates the polynomial growth bound")
        if self.obstacle is not None:
            S = np.asarray(self.obstacle(self.chars.T, xs), dtype=float)
            if np.any(S > H + 1e-12):
                raise ConfigurationError("obstacle exceeds the terminal data at the horizon")

    def x_probe(self, n: int = 201) -> np.ndarray:
        if self.domain.preset == "interval":
            return np.linspace(*self.domain.params, n)
        return self.domain.sample(n, np.random.default_rng(0))[:, 0]


@dataclass
class SolutionField:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    se: np.ndarray
    meta: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def continuity_modulus(self) -> float:
        u = self.u
        jumps = [0.0]
        if u.shape[0] > 1:
            jumps.append(float(np.nanmax(np.abs(np.diff(u, axis=0)))))
        if u.shape[1] > 1:
            jumps.append(float(np.nanmax(np.abs(np.diff(u, axis=1)))))
        return max(jumps)

    def at(self, t: float, x: float) -> float:
        """Value at a time node (exact match) and any x (linear interpolation)."""
        hit = np.flatnonzero(np.isclose(self.t, t, rtol=0, atol=1e-12))
        if hit.size == 0:
            raise ConfigurationError(f"t={t} is not a node of the field")
        return float(np.interp(x, self.x, self.u[hit[0]]))

    def rows(self):
        for i, t in enumerate(self.t):
            for j, x in enumerate(self.x):
                yield float(t), float(x), float(self.u[i, j]), float(self.se[i, j])


# ---------------------------------------------------------------- Monte Carlo representation


def _base_grid(T: float, n_steps: int, t_points) -> TimeGrid:
    grid = TimeGrid.uniform(0.0, T, n_steps)
    for t in t_points:
        if not np.any(np.isclose(grid.nodes, t, rtol=0, atol=1e-12)):
            raise ConfigurationError(f"t={t} must be a node of the uniform {n_steps}-step grid on [0, {T}]")
    return grid


def mc_point(problem: SIPDEProblem, basis, t: float, x, n_paths: int, base: TimeGrid, seed: int,
             dB_global: Optional[np.ndarray] = None, config: SolverConfig = SolverConfig()) -> dict:
    """u(t, x) from one batch of reflected paths started at (t, x)."""
    i0 = int(np.flatnonzero(np.isclose(base.nodes, t, rtol=0, atol=1e-12))[0])
    T = base.T
    if i0 == base.n_steps:
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        val = float(np.asarray(problem.terminal(xv))[0])
        return {"u": val, "se": 0.0}
    grid = TimeGrid(float(base.nodes[i0]), T, base.nodes[i0:])
    if problem.drivers.g is not None:
        batch = simulate_batch(problem.chars, basis, grid, n_paths, seed, backward="common",
                               backward_increments=dB_global[None, i0:])
    else:
        batch = simulate_batch(problem.chars, basis, grid, n_paths, seed)
    paths = solve_paths(problem.domain, problem.chars, basis, grid, problem.sigma, (grid.t0, x), batch)
    rp = RGBDSDEProblem(terminal=problem.terminal, drivers=problem.drivers, obstacle=problem.obstacle,
                        kappa=paths, label="sipde")
    sol = solve(rp, batch, basis, config)
    return {"u": sol.Y0, "se": sol.Y0_se, "moment_p4": moment_report(paths, 4.0)["sup_moment"],
            "kappa_T": float(paths.kappa[:, -1].mean())}


def _run_job(job, problem, basis, t_points, x_points, n_paths, base, seed, dB_global, config):
    i, j = job
    try:
        res = mc_point(problem, basis, t_points[i], x_points[j], n_paths, base, seed, dB_global, config)
        return job, res, None
    except (ConfigurationError, NumericalError) as exc:
        return job, None, f"{type(exc).__name__}: {exc}"


def mc_representation(problem: SIPDEProblem, basis, t_points, x_points, n_paths: int = 20000,
                      n_steps: int = 100, seed: int = 0, workers: int = 1,
                      config: SolverConfig = SolverConfig()) -> SolutionField:
    """u on the product grid t_points x x_points; t_points must lie on the uniform base grid.

    All points share one seed (coupled paths) and one global backward Brownian path.
    """
    t_points = np.asarray(t_points, dtype=float)
    x_points = np.asarray(x_points, dtype=float)
    base = _base_grid(problem.chars.T, n_steps, t_points)
    dB_global = None
    if problem.drivers.g is not None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x5D1])))
        dB_global = rng.standard_normal(n_steps) * np.sqrt(base.dt)
    jobs = [(i, j) for i in range(t_points.size) for j in range(x_points.size)]
    u = np.full((t_points.size, x_points.size), np.nan)
    se = np.full_like(u, np.nan)
    failures = {}
    extra = {}

    args = (problem, basis, t_points, x_points, n_paths, base, seed, dB_global, config)
    if workers > 1:
        # loky pickles closures (preset drivers) with cloudpickle; results do not depend on scheduling
        results = Parallel(n_jobs=workers, backend="loky")(delayed(_run_job)(job, *args) for job in jobs)
    else:
        results = [_run_job(job, *args) for job in jobs]
    for (i, j), res, err in results:
        if err is not None:
            failures[f"{t_points[i]!r},{x_points[j]!r}"] = err
            continue
        u[i, j], se[i, j] = res["u"], res["se"]
        extra[(i, j)] = res
    moments = [r.get("moment_p4", 0.0) for r in extra.values()]
    meta = {"n_paths": n_paths, "n_steps": n_steps, "seed": seed,
            "max_moment_p4": float(max(moments)) if moments else None}
    return SolutionField(t_points, x_points, u, se, meta, failures)


# ---------------------------------------------------------------- generator and u^1_k terms


def _shift_points(problem: SIPDEProblem, x: float, t: float):
    s = float(np.asarray(problem.sigma(np.atleast_1d(x)))[0]) if np.ndim(problem.sigma(np.atleast_1d(x))) else float(problem.sigma(x))
    shifted = x + s * problem.chars.sizes
    inside = problem.domain.contains(shifted[:, None]) if shifted.size else np.ones(0, bool)
    if not np.all(inside):
        raise ConfigurationError(f"shifted point {shifted[~inside][0]} leaves the closed domain")
    return s, shifted


def _dxu(u: Callable, t: float, x: float, hx: float) -> float:
    return (float(u(t, x + hx)) - float(u(t, x - hx))) / (2 * hx)


def generator_apply(problem: SIPDEProblem, u: Callable, t: float, x: float, hx: float = 1e-4) -> float:
    """b sigma D_x u + sum_j [u(x + sigma e_j) - u(x) - D_x u sigma e_j] lambda_j(t)."""
    s, shifted = _shift_points(problem, x, t)
    du = _dxu(u, t, x, hx)
    ux = float(u(t, x))
    val = float(problem.chars.drift(t)) * s * du
    lam = problem.chars.intensities(t)
    for e, xs, lj in zip(problem.chars.sizes, shifted, lam):
        val += (float(u(t, xs)) - ux - du * s * e) * lj
    return val


def u1k_terms(problem: SIPDEProblem, basis, u: Callable, t: float, x: float, hx: float = 1e-4) -> np.ndarray:
    """Component k: sum_j [u(x + sigma e_j) - u(x) - D_x u e_j] p_k(e_j) lambda_j(t), evaluated as printed."""
    if basis is None or not problem.chars.n_atoms:
        return np.zeros(0 if basis is None else basis.d)
    _, shifted = _shift_points(problem, x, t)
    du = _dxu(u, t, x, hx)
    ux = float(u(t, x))
    lam = problem.chars.intensities(t)
    sizes = problem.chars.sizes
    P = basis.p_all(sizes)
    diff = np.array([float(u(t, xs)) for xs in shifted]) - ux - du * sizes
    return P @ (diff * lam)


# ---------------------------------------------------------------- finite-difference oracle


def _fd_run(problem: SIPDEProblem, basis, n_x: int, n_t: int) -> np.ndarray:
    a, b = problem.domain.params
    xg = np.linspace(a, b, n_x + 1)
    dx = xg[1] - xg[0]
    T = problem.chars.T
    tg = np.linspace(0.0, T, n_t + 1)
    chars = problem.chars
    sizes = chars.sizes
    sig = np.asarray(problem.sigma(xg), dtype=float) * np.ones_like(xg)
    drv = problem.drivers
    P = basis.p_all(sizes) if (basis is not None and sizes.size) else np.zeros((0, sizes.size))
    U = np.empty((n_t + 1, xg.size))
    U[-1] = problem.terminal(xg)
    right = xg.size - 1
    for n in range(n_t - 1, -1, -1):
        t, dt = tg[n], tg[n + 1] - tg[n]
        old = U[n + 1]
        lam = chars.intensities(t) if sizes.size else np.zeros(0)
        v = sig * (float(chars.drift(t)) - float(np.dot(sizes, lam)))
        jump = np.zeros_like(xg)
        du = np.gradient(old, dx, edge_order=2)
        z = np.zeros((xg.size, P.shape[0]))
        for j, e in enumerate(sizes):
            shifted = np.interp(xg + sig * e, xg, old)
            jump += lam[j] * (shifted - old)
            if P.shape[0]:
                z += ((shifted - old - du * e) * lam[j])[:, None] * P[:, j][None, :]
        rhs = old + dt * (jump + np.asarray(drv.f(t, xg, old, z), dtype=float))
        # upwind transport, implicit; where the upwind node leaves the domain the
        # Neumann condition <grad Psi, grad u> + h = 0 supplies the slope
        ab = np.zeros((3, xg.size))
        ab[1] = 1.0
        c = dt * np.abs(v) / dx
        fwd = v > 0
        bwd = v < 0
        h_vals = np.asarray(drv.h(t, xg, old), dtype=float) * np.ones_like(xg) if drv.h is not None else np.zeros_like(xg)
        for k in np.flatnonzero(fwd):
            if k == right:
                rhs[k] += dt * v[k] * h_vals[k]  # grad Psi = -1 at the right end: u_x = h
            else:
                ab[1, k] += c[k]
                ab[0, k + 1] -= c[k]
        for k in np.flatnonzero(bwd):
            if k == 0:
                rhs[k] += dt * v[k] * (-h_vals[k])  # grad Psi = +1 at the left end: u_x = -h
            else:
                ab[1, k] += c[k]
                ab[2, k - 1] -= c[k]
        new = solve_banded((1, 1), ab, rhs)
        if problem.obstacle is not None:
            new = np.maximum(new, np.asarray(problem.obstacle(t, xg), dtype=float))
        U[n] = new
    if not np.all(np.isfinite(U)):
        raise NumericalError("finite-difference solve produced non-finite values")
    return tg, xg, U


def fd_obstacle_solve(problem: SIPDEProblem, basis=None, n_x: int = 400, n_t: int = 400) -> SolutionField:
    """Implicit upwind transport, explicit nonlocal and reaction terms, obstacle projection."""
    if problem.drivers.g is not None:
        raise ConfigurationError("the finite-difference oracle needs g = 0")
    if problem.domain.preset != "interval":
        raise ConfigurationError("the finite-difference oracle is one-dimensional (interval domains)")
    T = problem.chars.T
    ts = problem.chars.sample_times()
    lam_max = float(np.max(problem.chars.intensities(ts).sum(axis=-1))) if problem.chars.n_atoms else 0.0
    refined = False
    if lam_max * T / n_t > 1.0:
        n_t *= 2
        refined = True
        if lam_max * T / n_t > 1.0:
            raise NumericalError(f"explicit nonlocal step violates dt * sum(lambda) <= 1 even after refinement (n_t={n_t})")
    tg, xg, U = _fd_run(problem, basis, n_x, n_t)
    return SolutionField(tg, xg, U, np.zeros_like(U), {"n_x": n_x, "n_t": n_t, "cfl_refined": refined})


def fd_self_convergence(problem: SIPDEProblem, basis, probes, n_x: int = 100, n_t: int = 100) -> dict:
    """Differences between three successive refinements at the probe points and their ratio."""
    fields = [fd_obstacle_solve(problem, basis, n_x * 2**k, n_t * 2**k) for k in range(3)]
    vals = np.array([[f.at(t, x) for t, x in probes] for f in fields])
    d1 = float(np.max(np.abs(vals[1] - vals[0])))
    d2 = float(np.max(np.abs(vals[2] - vals[1])))
    return {"diff_coarse": d1, "diff_fine": d2, "ratio": d2 / d1 if d1 > 0 else 0.0}


# ---------------------------------------------------------------- comparison


def compare_report(mc: SolutionField, fd: SolutionField, scheme_tol: float = 0.03) -> dict:
    points = []
    for t, x, u, se in mc.rows():
        ref = fd.at(t, x)
        diff = abs(u - ref)
        points.append({"t": t, "x": x, "mc": u, "fd": ref, "abs_diff": diff, "se": se,
                       "tolerance": 3 * (se + scheme_tol), "pass": bool(diff <= 3 * (se + scheme_tol))})
    return {
        "points": points,
        "max_abs_diff": max((p["abs_diff"] for p in points), default=0.0),
        "pass": all(p["pass"] for p in points),
        "scheme_tol": scheme_tol,
    }
