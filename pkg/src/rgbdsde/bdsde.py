"""Backward solvers for reflected generalized BDSDEs driven by the H-basis.

Scheme on a grid tau_0 < ... < tau_N, backward in i:

    target_i = Y_{i+1} + g(tau_{i+1}, X_{i+1}, Y_{i+1}, Z_{i+1}) dB_i
    Z_i^(k)  = E[(target_i - E[target_i | X_i]) dH_i^(k) | X_i] / int gamma_k^2

By default E[target | X_i] and Z_i come from one least-squares fit of the
target on [phi(X_i), phi(X_i) dH_i^(k)]; this estimates the same pair and
uses dH as a control variate ("bracket" reproduces the formula above).
    y        = E[target_i | X_i] + f(tau_i, X_i, y, Z_i) dtau + h(tau_i, X_i, y) E[dkappa_i | X_i]
    Y_i      = max(y, S(tau_i, X_i)),  dK_i = Y_i - y

The conditional expectation given the state stands in for conditioning on
the L-history and the future B increments. That is exact when B is shared
by every path ("common" mode) or when the state is deterministic (each path
is then its own B scenario).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .basis import MartingaleBasis, gamma_sq_integral
from .errors import ConfigurationError, NumericalError
from .paths import PathBatch
from .reflection import ReflectedPaths
from .regression import ConditionalExpectation
from .yosida import monotone_root, yosida_apply

FIXED_POINT_TOL = 1e-13
_PROBE_TOL = 1e-9


@dataclass(frozen=True)
class DriverSet:
    """Generators f(t,x,y,z), h(t,x,y), g(t,x,y,z) with declared structural constants.

    Constants left as None are not checked. `lipschitz` is the joint
    y-Lipschitz bound used to run the implicit step as a contraction;
    without it the step is solved as a monotone root.
    """

    f: Callable
    h: Optional[Callable] = None
    g: Optional[Callable] = None
    lam: Optional[float] = None
    varrho: Optional[float] = None
    eta: Optional[float] = None
    rho: Optional[float] = None
    alpha: Optional[float] = None
    zeta: Optional[float] = None
    varphi: Optional[float] = None
    phi_hat: Optional[float] = None
    psi: Optional[float] = None
    lipschitz: Optional[float] = None
    f_uses_z: bool = True
    g_uses_yz: bool = True
    name: str = ""

    def __post_init__(self):
        if self.alpha is not None and not 0 <= self.alpha < 0.5:
            raise ConfigurationError(f"alpha must lie in [0, 1/2), got {self.alpha}")
        if self.g is None:
            object.__setattr__(self, "g_uses_yz", False)

    def a_squared(self) -> float:
        """|lambda| + phi + phi^2 + rho + eta^2 from the declared constants (missing ones count as 0)."""
        lam = abs(self.lam or 0.0)
        ph = self.phi_hat or 0.0
        return lam + ph + ph**2 + (self.rho or 0.0) + (self.eta or 0.0) ** 2


def check_drivers(drivers: DriverSet, d: int, states=None, T: float = 1.0, gamma_sq: float = 1.0,
                  n_probes: int = 256, seed: int = 0) -> dict:
    """Spot-check declared constants on random probes; raise ConfigurationError on violation."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, T, n_probes)
    if states is None:
        x = rng.uniform(-1, 1, n_probes)
    else:
        s = np.asarray(states, dtype=float)
        s = s.reshape(-1) if s.ndim <= 2 else s.reshape(-1, s.shape[-1])
        x = s[rng.integers(0, s.shape[0], n_probes)]
    y = rng.uniform(-3, 3, n_probes)
    yp = rng.uniform(-3, 3, n_probes)
    z = rng.uniform(-2, 2, (n_probes, d))
    zp = rng.uniform(-2, 2, (n_probes, d))
    zero_z = np.zeros_like(z)
    out = {}
    gnorm = np.sqrt(gamma_sq) * np.linalg.norm(z - zp, axis=1)

    def viol(name, lhs, rhs):
        scale = 1.0 + np.abs(rhs)
        bad = lhs > rhs + _PROBE_TOL * scale
        out[name] = not bool(bad.any())
        if bad.any():
            raise ConfigurationError(f"declared driver constant {name} violated on a probe")

    f = drivers.f
    fy = np.asarray(f(t, x, y, z), dtype=float)
    fyp = np.asarray(f(t, x, yp, z), dtype=float)
    if drivers.lam is not None:
        viol("lam", (y - yp) * (fy - fyp), drivers.lam * (y - yp) ** 2)
    if drivers.eta is not None and d:
        viol("eta", np.abs(fy - np.asarray(f(t, x, y, zp))), drivers.eta * gnorm)
    if not drivers.f_uses_z and d:
        viol("f_z_free", np.abs(fy - np.asarray(f(t, x, y, zp))), np.zeros(n_probes))
    if drivers.varphi is not None or drivers.phi_hat is not None:
        f0 = np.abs(np.asarray(f(t, x, y, zero_z), dtype=float))
        viol("growth_f", f0, (drivers.varphi or 0.0) + (drivers.phi_hat or 0.0) * np.abs(y))
    if drivers.h is not None:
        h = drivers.h
        hy, hyp = np.asarray(h(t, x, y), dtype=float), np.asarray(h(t, x, yp), dtype=float)
        if drivers.varrho is not None:
            viol("varrho", (y - yp) * (hy - hyp), drivers.varrho * (y - yp) ** 2)
        if drivers.psi is not None or drivers.zeta is not None:
            viol("growth_h", np.abs(hy), (drivers.psi or 0.0) + (drivers.zeta or 0.0) * np.abs(y))
    if drivers.g is not None and (drivers.rho is not None or drivers.alpha is not None):
        g = drivers.g
        dg = np.asarray(g(t, x, y, z), dtype=float) - np.asarray(g(t, x, yp, zp), dtype=float)
        viol("g_lipschitz", dg**2, (drivers.rho or 0.0) * (y - yp) ** 2 + (drivers.alpha or 0.0) * gnorm**2)
    if drivers.g is not None and not drivers.g_uses_yz:
        g = drivers.g
        viol("g_yz_free", np.abs(np.asarray(g(t, x, y, z)) - np.asarray(g(t, x, yp, zp))), np.zeros(n_probes))
    if drivers.lipschitz is not None:
        bound = drivers.lipschitz * np.abs(y - yp)
        viol("lipschitz_f", np.abs(fy - fyp), bound)
        if drivers.h is not None:
            viol("lipschitz_h", np.abs(np.asarray(drivers.h(t, x, y)) - np.asarray(drivers.h(t, x, yp))), bound)
    return out


KappaSource = Union[None, ReflectedPaths, np.ndarray]


@dataclass
class RGBDSDEProblem:
    """Terminal value, drivers, optional obstacle and the increasing process kappa.

    terminal and obstacle take the state (and time for the obstacle); state
    defaults to the reflected path when kappa comes from one, else to L.
    """

    terminal: Union[float, Callable]
    drivers: DriverSet
    obstacle: Optional[Callable] = None
    kappa: KappaSource = None
    state: Optional[np.ndarray] = None
    label: str = ""

    def with_terminal(self, terminal) -> "RGBDSDEProblem":
        return replace(self, terminal=terminal)


@dataclass(frozen=True)
class SolverConfig:
    degree: int = 2
    z_method: str = "joint"
    yosida_delta: Optional[float] = None
    picard_tol: float = 1e-6
    max_iters: int = 50
    reflect_tol: float = 1e-8
    theta: float = 8.0
    mu: float = 1.0
    eps: float = 1e-6
    check_probes: bool = True


@dataclass
class SolutionGrid:
    Y: np.ndarray
    Z: np.ndarray
    K: np.ndarray
    dK: np.ndarray
    kappa: np.ndarray
    state: np.ndarray
    obstacle: Optional[np.ndarray]
    bracket: np.ndarray
    nodes: np.ndarray
    Y0: float
    Y0_se: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.Y.shape[0]


# ---------------------------------------------------------------- helpers


def _as_callable_terminal(terminal):
    if callable(terminal):
        return terminal
    c = float(terminal)
    return lambda x: np.full(np.shape(x)[0], c)


def _state_and_kappa(problem: RGBDSDEProblem, batch: PathBatch):
    n, N = batch.n_paths, batch.n_steps
    kap = problem.kappa
    if isinstance(kap, ReflectedPaths):
        state = kap.state() if problem.state is None else problem.state
        kappa = kap.kappa
    else:
        state = batch.L if problem.state is None else problem.state
        if kap is None:
            kappa = np.zeros((n, N + 1))
        else:
            kappa = np.broadcast_to(np.asarray(kap, dtype=float), (n, N + 1))
    state = np.asarray(state, dtype=float)
    if state.shape[:2] != (n, N + 1):
        raise ConfigurationError(f"state has shape {state.shape}, expected ({n}, {N + 1}, ...)")
    if np.any(np.diff(kappa, axis=1) < -1e-14):
        raise ConfigurationError("kappa must be nondecreasing")
    return state, np.asarray(kappa, dtype=float)


def _rows_identical(a: np.ndarray) -> bool:
    return bool(np.all(a == a[:1]))


def _bracket(basis: Optional[MartingaleBasis], nodes: np.ndarray) -> np.ndarray:
    if basis is None:
        return np.zeros((nodes.size - 1, 0))
    return np.array([gamma_sq_integral(basis, nodes[i], nodes[i + 1]) for i in range(nodes.size - 1)])


def _implicit_step(drivers: DriverSet, t, x, E, z, dt, khat, config: SolverConfig, f_override=None):
    """Solve y - f(t,x,y,z) dt - h(t,x,y) khat = E pathwise."""
    f = drivers.f
    h = drivers.h
    delta = config.yosida_delta

    def fval(y):
        if delta is not None:
            return yosida_apply(lambda J: np.asarray(f(t, x, J, z), dtype=float), y, delta)
        return np.asarray(f(t, x, y, z), dtype=float)

    def hval(y):
        if h is None:
            return 0.0
        if delta is not None:
            return yosida_apply(lambda J: np.asarray(h(t, x, J), dtype=float), y, delta)
        return np.asarray(h(t, x, y), dtype=float)

    use_h = h is not None and np.any(khat > 0)
    if drivers.lipschitz is not None and delta is None:
        rate = drivers.lipschitz * (dt + (float(np.max(khat)) if use_h else 0.0))
        if rate >= 1:
            raise ConfigurationError(f"Lipschitz constant times step is {rate:.3g} >= 1; refine the grid")
        y = E.copy()
        for _ in range(500):
            new = E + fval(y) * dt + (hval(y) * khat if use_h else 0.0)
            if np.max(np.abs(new - y) / (1.0 + np.abs(new))) <= FIXED_POINT_TOL:
                return new
            y = new
        raise NumericalError("implicit step fixed point did not converge")

    def F(y):
        out = y - fval(y) * dt
        if use_h:
            out = out - hval(y) * khat
        return out

    return monotone_root(F, E, x0=E, scale=np.abs(fval(E)) * dt + 1e-3)


# ---------------------------------------------------------------- solver


def solve(problem: RGBDSDEProblem, batch: PathBatch, basis: Optional[MartingaleBasis] = None,
          config: SolverConfig = SolverConfig(), frozen: Optional[tuple] = None) -> SolutionGrid:
    """Backward recursion with optional obstacle reflection.

    frozen=(Yn, Zn) evaluates g at (Yn, Zn) and the z-slot of f at Zn (one
    Picard sweep).
    """
    drivers = problem.drivers
    grid = batch.grid
    nodes = grid.nodes
    dt = grid.dt
    n, N = batch.n_paths, batch.n_steps
    state, kappa = _state_and_kappa(problem, batch)
    dk = np.diff(kappa, axis=1)
    bracket = _bracket(basis, nodes)
    d = bracket.shape[1]
    if d and batch.d != d:
        raise ConfigurationError(f"batch carries {batch.d} basis increments, basis has {d}")
    if d and np.any(bracket <= 0):
        raise NumericalError("zero predicted bracket on an interval; cannot normalize Z")
    dB = batch.dB_full()
    pathwise = n == 1 or (_rows_identical(state) and _rows_identical(kappa))
    if drivers.g is not None and not pathwise and batch.backward_mode != "common":
        raise ConfigurationError(
            "g is present with independent backward increments and a random state; "
            "simulate with backward='common' so the state regression conditions on B"
        )
    if config.check_probes:
        check_drivers(drivers, d, states=state, T=float(nodes[-1]))

    Y = np.zeros((n, N + 1))
    Z = np.zeros((n, N, d))
    dK = np.zeros((n, N))
    x_T = state[:, N]
    Y[:, N] = _as_callable_terminal(problem.terminal)(x_T)
    S = None
    if problem.obstacle is not None:
        S = np.zeros((n, N + 1))
        S[:, N] = problem.obstacle(nodes[N], x_T)
        if np.any(Y[:, N] < S[:, N] - config.reflect_tol):
            raise ConfigurationError("terminal value lies below the obstacle at the horizon")
    g = drivers.g
    fzero = np.zeros((n, d))
    target0 = None
    reg_kinds = []
    for i in range(N - 1, -1, -1):
        t_i, t_n = nodes[i], nodes[i + 1]
        x_i, x_n = state[:, i], state[:, i + 1]
        Yn = Y[:, i + 1]
        Zn = Z[:, i + 1] if i + 1 < N else fzero
        target = Yn.copy()
        if g is not None:
            gy, gz = (frozen[0][:, i + 1], frozen[1][:, i + 1] if i + 1 < N else fzero) if frozen else (Yn, Zn)
            target = target + np.asarray(g(t_n, x_n, gy, gz), dtype=float) * dB[:, i]
        ce = ConditionalExpectation(x_i, config.degree, pathwise=pathwise)
        reg_kinds.append(ce.kind)
        if d and config.z_method == "joint":
            E, Z[:, i] = ce.joint_fit(target, batch.dH[:, i, :])
        else:
            E = ce.project(target)
            if d:
                Z[:, i] = ce.project((target - E)[:, None] * batch.dH[:, i, :]) / bracket[i][None, :]
        if drivers.h is not None and np.any(dk[:, i] > 0):
            khat = np.maximum(ce.project(dk[:, i]), 0.0)
        else:
            khat = np.zeros(n)
        zslot = frozen[1][:, i] if frozen else Z[:, i]
        y = _implicit_step(drivers, t_i, x_i, E, zslot, dt[i], khat, config)
        if S is not None:
            S[:, i] = problem.obstacle(t_i, x_i)
            Y[:, i] = np.maximum(y, S[:, i])
            dK[:, i] = Y[:, i] - y
        else:
            Y[:, i] = y
        if i == 0:
            target0 = target
    K = np.zeros((n, N + 1))
    np.cumsum(dK, axis=1, out=K[:, 1:])
    if pathwise:
        se = float(Y[:, 0].std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    else:
        se = float(target0.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    diag = {
        "pathwise": pathwise,
        "regression": sorted(set(reg_kinds)),
        "yosida_delta": config.yosida_delta,
    }
    if S is not None:
        defect = np.sum((Y[:, :-1] - S[:, :-1]) * dK, axis=1)
        diag["skorokhod_defect"] = float(np.mean(defect))
        diag["min_dK"] = float(dK.min())
        diag["min_Y_minus_S"] = float((Y - S).min())
        diag["KT_norm"] = float(np.sqrt(np.mean(K[:, -1] ** 2)))
    sol = SolutionGrid(Y=Y, Z=Z, K=K, dK=dK, kappa=kappa, state=state, obstacle=S, bracket=bracket,
                       nodes=nodes, Y0=float(Y[:, 0].mean()), Y0_se=se, diagnostics=diag)
    if not np.all(np.isfinite(Y)) or not np.all(np.isfinite(Z)):
        raise NumericalError("non-finite values in the backward solution")
    return sol


def solve_lipschitz(problem: RGBDSDEProblem, batch: PathBatch, basis=None, config: SolverConfig = SolverConfig()) -> SolutionGrid:
    if problem.obstacle is not None:
        raise ConfigurationError("solve_lipschitz takes problems without an obstacle; use solve_reflected")
    return solve(problem, batch, basis, config)


def solve_reflected(problem: RGBDSDEProblem, batch: PathBatch, basis=None, config: SolverConfig = SolverConfig()) -> SolutionGrid:
    if problem.obstacle is None:
        raise ConfigurationError("solve_reflected needs an obstacle")
    return solve(problem, batch, basis, config)


# ---------------------------------------------------------------- Picard


def _weighted_sq(sol_like_Y, Z, kappa, nodes, bracket, a2, theta, mu):
    from .norms import phi_weights

    Phi = phi_weights(nodes, kappa, a2, theta, mu)
    dt = np.diff(nodes)
    dk = np.diff(kappa, axis=1)
    hq = np.mean(np.sum(Phi[:, :-1] * sol_like_Y[:, :-1] ** 2 * (a2 * dt[None, :] + dk), axis=1))
    hz = np.mean(np.sum(Phi[:, :-1, None] * Z**2 * bracket[None, :, :], axis=(1, 2))) if Z.size else 0.0
    return float(hq), float(hz)


def picard_solve(problem: RGBDSDEProblem, batch: PathBatch, basis=None, config: SolverConfig = SolverConfig(),
                 init: str = "zero", tol: Optional[float] = None, max_iters: Optional[int] = None):
    """Outer iteration freezing (Y^n, Z^n) inside g and the z-slot of f.

    Returns (solution, residual history). The residual is the weighted
    H^{2,Q} plus H^{2,l2} distance between successive iterates.
    """
    tol = config.picard_tol if tol is None else tol
    max_iters = config.max_iters if max_iters is None else max_iters
    drivers = problem.drivers
    if not drivers.f_uses_z and not drivers.g_uses_yz:
        sol = solve(problem, batch, basis, config)
        sol.diagnostics["picard_residuals"] = [0.0]
        sol.diagnostics["picard_iterations"] = 1
        return sol, [0.0]
    state, kappa = _state_and_kappa(problem, batch)
    n, N = batch.n_paths, batch.n_steps
    d = batch.d if basis is not None else 0
    if init == "zero":
        Yk = np.zeros((n, N + 1))
    elif init == "obstacle":
        if problem.obstacle is None:
            Yk = np.zeros((n, N + 1))
            Yk[:, N] = _as_callable_terminal(problem.terminal)(state[:, N])
        else:
            Yk = np.stack([problem.obstacle(t, state[:, i]) for i, t in enumerate(batch.grid.nodes)], axis=1)
            Yk = np.broadcast_to(Yk, (n, N + 1)).astype(float)
    else:
        raise ConfigurationError(f"unknown Picard initialization {init!r}")
    Zk = np.zeros((n, N, d))
    a2 = max(drivers.a_squared(), config.eps)
    nodes = batch.grid.nodes
    bracket = _bracket(basis, nodes)
    residuals = []
    sol = None
    for _ in range(max_iters):
        sol = solve(problem, batch, basis, config, frozen=(Yk, Zk))
        hq, hz = _weighted_sq(sol.Y - Yk, sol.Z - Zk, kappa, nodes, bracket, a2, config.theta, config.mu)
        res = float(np.sqrt(hq + hz))
        residuals.append(res)
        Yk, Zk = sol.Y, sol.Z
        if res <= tol:
            break
    else:
        warnings.warn(f"Picard iteration stopped after {max_iters} sweeps at residual {residuals[-1]:.3g}", stacklevel=2)
    sol.diagnostics["picard_residuals"] = residuals
    sol.diagnostics["picard_iterations"] = len(residuals)
    sol.diagnostics["picard_converged"] = residuals[-1] <= tol
    return sol, residuals


# ---------------------------------------------------------------- comparison and diagnostics


def compare_solutions(problem1: RGBDSDEProblem, problem2: RGBDSDEProblem, batch: PathBatch, basis=None,
                      config: SolverConfig = SolverConfig(), n_probes: int = 256, seed: int = 0) -> dict:
    """Solve both problems on the same paths and report where Y^1 exceeds Y^2."""
    state, _ = _state_and_kappa(problem1, batch)
    xi1 = _as_callable_terminal(problem1.terminal)(state[:, -1])
    xi2 = _as_callable_terminal(problem2.terminal)(state[:, -1])
    if np.any(xi1 > xi2 + _PROBE_TOL * (1 + np.abs(xi2))):
        raise ConfigurationError("comparison requires xi^1 <= xi^2 on every path")
    rng = np.random.default_rng(seed)
    d = batch.d if basis is not None else 0
    flat = state.reshape(-1) if state.ndim == 2 else state.reshape(-1, state.shape[-1])
    x = flat[rng.integers(0, flat.shape[0], n_probes)]
    t = rng.uniform(batch.grid.t0, batch.grid.T, n_probes)
    y = rng.uniform(-3, 3, n_probes)
    z = rng.uniform(-2, 2, (n_probes, d))
    f1 = np.asarray(problem1.drivers.f(t, x, y, z))
    f2 = np.asarray(problem2.drivers.f(t, x, y, z))
    if np.any(f1 > f2 + _PROBE_TOL * (1 + np.abs(f2))):
        raise ConfigurationError("comparison requires f^1 <= f^2 on probes")
    s1 = picard_solve(problem1, batch, basis, config)[0]
    s2 = picard_solve(problem2, batch, basis, config)[0]
    tol = 3.0 * max(s1.Y0_se, s2.Y0_se)
    above = s1.Y > s2.Y + tol
    return {
        "fraction_violating": float(above.mean()),
        "comparison_tol": tol,
        "Y0": [s1.Y0, s2.Y0],
        "Y0_gap": s2.Y0 - s1.Y0,
        "min_gap": float((s2.Y - s1.Y).min()),
        "solutions": (s1, s2),
    }


def equation_residuals(problem: RGBDSDEProblem, sol: SolutionGrid, batch: PathBatch) -> dict:
    """Per-step residual of the discrete backward equation, with realized dkappa and dH.

    Generators are evaluated at the value before the reflection push, as in the scheme.
    """
    drivers = problem.drivers
    nodes = sol.nodes
    dt = np.diff(nodes)
    n, N = sol.Y.shape[0], nodes.size - 1
    dB = batch.dB_full()
    R = np.zeros((n, N))
    d = sol.Z.shape[2]
    for i in range(N):
        x_i, x_n = sol.state[:, i], sol.state[:, i + 1]
        Zn = sol.Z[:, i + 1] if i + 1 < N else np.zeros((n, d))
        y_pre = sol.Y[:, i] - sol.dK[:, i]
        rhs = sol.Y[:, i + 1] + np.asarray(drivers.f(nodes[i], x_i, y_pre, sol.Z[:, i])) * dt[i]
        if drivers.h is not None:
            rhs = rhs + np.asarray(drivers.h(nodes[i], x_i, y_pre)) * (sol.kappa[:, i + 1] - sol.kappa[:, i])
        if drivers.g is not None:
            rhs = rhs + np.asarray(drivers.g(nodes[i + 1], x_n, sol.Y[:, i + 1], Zn)) * dB[:, i]
        rhs = rhs + sol.dK[:, i]
        if d:
            rhs = rhs - np.sum(sol.Z[:, i] * batch.dH[:, i], axis=1)
        R[:, i] = sol.Y[:, i] - rhs
    mean = R.mean(axis=0)
    se = R.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(N)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(mean) / se, np.where(np.abs(mean) > 1e-12, np.inf, 0.0))
    return {"mean": mean, "se": se, "max_abs_z": float(z.max()), "within_3se": bool(np.all(z <= 3.0))}


# ---------------------------------------------------------------- exponential change of variables


def exponential_shift(problem: RGBDSDEProblem, batch: PathBatch, lam: float, mu: float):
    """Multiply by E_t = exp(lam t + mu kappa_t) so f's monotonicity constant drops by lam and h's by mu.

    Returns (shifted problem, back-transform). The shifted generators are
    E f(y/E, z/E) - lam y and E h(y/E) - mu y. The state is augmented with
    kappa when kappa is random.
    """
    state, kappa = _state_and_kappa(problem, batch)
    n, N = batch.n_paths, batch.n_steps
    nodes = batch.grid.nodes
    drv = problem.drivers
    aug = state.ndim == 2 and not _rows_identical(kappa)
    if state.ndim != 2 and not _rows_identical(kappa):
        raise ConfigurationError("exponential shift with random kappa supports one-dimensional states only")
    kap_det = kappa[0]

    def split(t, xa):
        xa = np.asarray(xa, dtype=float)
        if aug:
            return xa[..., 0], xa[..., 1]
        k = np.interp(t, nodes, kap_det)
        return xa, np.broadcast_to(k, np.shape(xa)[:1] if np.ndim(xa) else ())

    def E(t, k):
        return np.exp(lam * np.asarray(t) + mu * np.asarray(k))

    def f_hat(t, xa, y, z):
        x, k = split(t, xa)
        e = E(t, k)
        zz = np.asarray(z) / (e[..., None] if np.ndim(e) else e)
        return e * np.asarray(drv.f(t, x, y / e, zz)) - lam * y

    h_hat = None
    if drv.h is not None:
        def h_hat(t, xa, y):
            x, k = split(t, xa)
            e = E(t, k)
            return e * np.asarray(drv.h(t, x, y / e)) - mu * y

    g_hat = None
    if drv.g is not None:
        def g_hat(t, xa, y, z):
            x, k = split(t, xa)
            e = E(t, k)
            zz = np.asarray(z) / (e[..., None] if np.ndim(e) else e)
            return e * np.asarray(drv.g(t, x, y / e, zz))

    term = _as_callable_terminal(problem.terminal)

    def xi_hat(xa):
        x, k = split(nodes[-1], xa)
        return E(nodes[-1], k) * term(x)

    obst = None
    if problem.obstacle is not None:
        def obst(t, xa):
            x, k = split(t, xa)
            return E(t, k) * problem.obstacle(t, x)

    def shift(c, by):
        return None if c is None else c - by

    new_drivers = replace(
        drv, f=f_hat, h=h_hat, g=g_hat, lam=shift(drv.lam, lam), varrho=shift(drv.varrho, mu),
        lipschitz=None, eta=None, rho=None, alpha=drv.alpha, varphi=None, phi_hat=None, psi=None, zeta=None,
    )
    new_state = np.stack([state, kappa], axis=-1) if aug else state
    shifted = RGBDSDEProblem(terminal=xi_hat, drivers=new_drivers, obstacle=obst, kappa=kappa, state=new_state,
                             label=problem.label + "+shift")
    factor = E(nodes[None, :], kappa)

    def back(sol: SolutionGrid) -> SolutionGrid:
        Y = sol.Y / factor
        Z = sol.Z / factor[:, :-1, None]
        dK = sol.dK / factor[:, :-1]
        K = np.zeros_like(sol.K)
        np.cumsum(dK, axis=1, out=K[:, 1:])
        return replace(sol, Y=Y, Z=Z, dK=dK, K=K, state=state, Y0=float(Y[:, 0].mean()),
                       Y0_se=sol.Y0_se / float(factor[0, 0]))

    return shifted, back
