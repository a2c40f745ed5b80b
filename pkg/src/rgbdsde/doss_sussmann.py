"""Stratonovich flow of the backward noise, its inverse, and the transformed coefficients.

chi(t, x, y) = y + int_t^T g(s, x, chi(s, x, y)) o dB_s is integrated from T
down to t. On each grid interval the Stratonovich increment is the exact
Wong-Zakai ODE d chi / d tau = g(s_mid, x, chi) over tau in [0, dB_i],
integrated by classical RK4 with substeps no longer than `max_substep`, and
jointly with the variational equation for D_y chi.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, NumericalError

MAX_SUBSTEP = 0.005
_FD_Y = 1e-6
INVERSE_TOL = 1e-9


def _dgdy(g, t, x, y):
    h = _FD_Y * (1.0 + np.abs(y))
    return (g(t, x, y + h) - g(t, x, y - h)) / (2 * h)


def _rk4_interval(g, s, x, y, D, dB, max_substep):
    """Integrate (chi, D_y chi) across one interval's Wong-Zakai ODE."""
    m = max(1, int(np.ceil(abs(dB) / max_substep)))
    h = dB / m

    def rhs(yv, Dv):
        gv = g(s, x, yv)
        return gv, _dgdy(g, s, x, yv) * Dv

    for _ in range(m):
        k1y, k1d = rhs(y, D)
        k2y, k2d = rhs(y + 0.5 * h * k1y, D + 0.5 * h * k1d)
        k3y, k3d = rhs(y + 0.5 * h * k2y, D + 0.5 * h * k2d)
        k4y, k4d = rhs(y + h * k3y, D + h * k3d)
        y = y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        D = D + h / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d)
    return y, D


@dataclass(frozen=True)
class Flow:
    """The flow along one Brownian path. g has signature g(t, x, y) and is vectorized."""

    g: Callable
    nodes: np.ndarray
    dB: np.ndarray
    max_substep: float = MAX_SUBSTEP

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        dB = np.asarray(self.dB, dtype=float).ravel()
        if dB.size != nodes.size - 1:
            raise ConfigurationError("flow needs one Brownian increment per grid interval")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "dB", dB)

    @property
    def n_steps(self) -> int:
        return self.dB.size

    def B_T_minus(self, i: int) -> float:
        return float(self.dB[i:].sum())

    def chi(self, i: int, x, y, with_derivative: bool = False):
        """chi(tau_i, x, y) (and D_y chi), vectorized over broadcast x, y."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        yv = y.astype(float).copy()
        D = np.ones_like(yv)
        for k in range(self.n_steps - 1, i - 1, -1):
            s = 0.5 * (self.nodes[k] + self.nodes[k + 1])
            yv, D = _rk4_interval(self.g, s, x, yv, D, self.dB[k], self.max_substep)
        if not np.all(np.isfinite(yv)):
            raise NumericalError("flow integration produced non-finite values")
        if with_derivative:
            if np.any(D <= 0):
                raise NumericalError("D_y chi is not positive: the flow is corrupted")
            return yv, D
        return yv

    def tabulate(self, x_grid, y_grid) -> "FlowField":
        """chi and D_y chi at every node over an (x, y) lattice, one backward sweep."""
        xg = np.atleast_1d(np.asarray(x_grid, dtype=float))
        yg = np.atleast_1d(np.asarray(y_grid, dtype=float))
        X, Yv = np.meshgrid(xg, yg, indexing="ij")
        N = self.n_steps
        chi = np.empty((N + 1,) + X.shape)
        Dy = np.empty_like(chi)
        chi[N], Dy[N] = Yv, 1.0
        cur, D = Yv.copy(), np.ones_like(Yv)
        for k in range(N - 1, -1, -1):
            s = 0.5 * (self.nodes[k] + self.nodes[k + 1])
            cur, D = _rk4_interval(self.g, s, X, cur, D, self.dB[k], self.max_substep)
            chi[k], Dy[k] = cur, D
        if not np.all(np.isfinite(chi)) or np.any(Dy <= 0):
            raise NumericalError("tabulated flow is not finite and increasing")
        return FlowField(self, xg, yg, chi, Dy)


@dataclass(frozen=True)
class FlowField:
    flow: Flow
    x_grid: np.ndarray
    y_grid: np.ndarray
    chi: np.ndarray
    Dy: np.ndarray

    def min_derivative(self) -> float:
        return float(self.Dy.min())

    def fd_consistency(self, h: float = 1e-5) -> float:
        """Max relative gap between D_y chi and a centered difference of the direct flow, at lattice points."""
        flow = self.flow
        worst = 0.0
        X, Yv = np.meshgrid(self.x_grid, self.y_grid, indexing="ij")
        for i in range(0, flow.n_steps + 1, max(1, flow.n_steps // 10)):
            fd = (flow.chi(i, X, Yv + h) - flow.chi(i, X, Yv - h)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - self.Dy[i]) / np.abs(self.Dy[i]))))
        return worst

    def interpolate(self, i: int, ix: int, y):
        """Cubic interpolation of chi(tau_i, x_ix, .) and D_y chi."""
        cs = CubicSpline(self.y_grid, self.chi[i, ix])
        cd = CubicSpline(self.y_grid, self.Dy[i, ix])
        return cs(y), cd(y)

    def _x_index(self, x) -> int:
        hit = np.flatnonzero(np.isclose(self.x_grid, float(x), rtol=0, atol=1e-12))
        if hit.size == 0:
            raise ConfigurationError(f"x={x} is not on the flow lattice")
        return int(hit[0])


def flow_chi(g: Callable, dB, nodes, x, y) -> np.ndarray:
    """chi(tau_i, x, y) for every node i, shape (N+1,) + broadcast(x, y).shape."""
    flow = Flow(g, nodes, dB)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    field = flow.tabulate(np.atleast_1d(x).ravel()[:1], np.atleast_1d(y).ravel()) if x.size and np.all(x == x.flat[0]) else None
    if field is not None:
        return field.chi[:, 0, :].reshape((flow.n_steps + 1,) + y.shape)
    return np.stack([flow.chi(i, x, y) for i in range(flow.n_steps + 1)])


def flow_inverse_pi(field: FlowField, i: int, x, target, tol: float = INVERSE_TOL):
    """pi(tau_i, x, target): spline guess from the table, then bracketed Newton on the direct flow."""
    flow = field.flow
    ix = field._x_index(x)
    scalar = np.ndim(target) == 0
    v = np.atleast_1d(np.asarray(target, dtype=float))
    row = field.chi[i, ix]
    yg = field.y_grid
    width = yg[-1] - yg[0]
    lo = np.full(v.shape, yg[0])
    hi = np.full(v.shape, yg[-1])
    # extend the bracket geometrically for targets outside the tabulated range
    for _ in range(60):
        clo, chh = flow.chi(i, x, lo), flow.chi(i, x, hi)
        below, above = v < clo, v > chh
        if not (below.any() or above.any()):
            break
        hi = np.where(below, lo, hi)
        lo = np.where(below, lo - width, lo)
        lo = np.where(above, hi, lo)
        hi = np.where(above, hi + width, hi)
        width *= 2
    else:
        raise NumericalError("cannot bracket the flow inverse")
    inside = (v >= row[0]) & (v <= row[-1])
    u = 0.5 * (lo + hi)
    if inside.any():
        inv = CubicSpline(row, yg) if np.all(np.diff(row) > 0) else None
        if inv is not None:
            u = np.where(inside, np.clip(inv(np.clip(v, row[0], row[-1])), lo, hi), u)
    for _ in range(100):
        c, D = flow.chi(i, x, u, with_derivative=True)
        r = c - v
        if np.all(np.abs(r) <= tol * 0.01 * (1 + np.abs(v))):
            break
        hi = np.where(r > 0, u, hi)
        lo = np.where(r <= 0, u, lo)
        nxt = u - r / D
        u = np.where((lo < nxt) & (nxt < hi), nxt, 0.5 * (lo + hi))
    if np.any(np.abs(flow.chi(i, x, u) - v) > tol * (1 + np.abs(v))):
        raise NumericalError("flow inverse did not reach the requested tolerance")
    return float(u[0]) if scalar else u


def _dx(flow: Flow, i, x, y, h=1e-5):
    return (flow.chi(i, x + h, y) - flow.chi(i, x - h, y)) / (2 * h)


def generator_x_chi(flow: Flow, i: int, x: float, y: float, chars, sigma, h: float = 1e-5) -> float:
    """L^x_t chi: the forward generator acting on chi(t, ., y)."""
    t = flow.nodes[i]
    s = float(sigma(x))
    base = float(flow.chi(i, x, y))
    dx = float(_dx(flow, i, x, y, h))
    val = float(chars.drift(t)) * s * dx
    for a in chars.atoms:
        val += (float(flow.chi(i, x + s * a.size, y)) - base - dx * s * a.size) * float(a.intensity(t))
    return val


def transformed_f(f: Callable, g: Callable, flow: Flow, basis, chars, sigma, phi: Callable, point) -> float:
    """Transformed driver evaluated term by term as printed, at (t_i, x, y, z).

    f has signature f(t, x, y, z_vector); phi is the test field phi(t, x).
    """
    i, x, y, z = point
    t = flow.nodes[i]
    chi, Dy = flow.chi(i, x, y, with_derivative=True)
    chi, Dy = float(chi), float(Dy)
    if Dy <= 0:
        raise NumericalError("D_y chi must be positive")
    Dx = float(_dx(flow, i, x, y))
    s = float(sigma(x))
    hphi = 1e-5
    Dphi = (float(phi(t, x + hphi)) - float(phi(t, x - hphi))) / (2 * hphi)
    jump = 0.0
    psi = np.zeros(basis.d if basis is not None else 0)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    zs = float(z[0]) if z.size else 0.0
    for a in chars.atoms:
        e = a.size
        lam = float(a.intensity(t))
        xs = x + s * e
        shifted = float(flow.chi(i, xs, float(phi(t, xs))))
        jump += (shifted - chi - (Dx + Dy * zs) * s * e) * lam
        if psi.size:
            psi += (shifted - chi - (Dx + Dy * Dphi) * e) * basis.p_all([e])[:, 0] * lam
    gv = float(g(t, x, chi))
    gy = float(_dgdy(g, t, x, np.asarray(chi)))
    val = float(np.asarray(f(t, x, chi, psi)))
    val = val - 0.5 * gv * gy + generator_x_chi(flow, i, x, y, chars, sigma) + jump
    return val / Dy


def transformed_h(h: Callable, flow: Flow, domain, point) -> float:
    """(h(t, x, chi) + <D_x chi, grad psi(x)>) / D_y chi at a boundary point."""
    i, x, y = point
    t = flow.nodes[i]
    if domain is not None and abs(float(domain.psi(np.atleast_1d(x))[0] if np.ndim(domain.psi(np.atleast_1d(x))) else domain.psi(np.atleast_1d(x)))) > 1e-9:
        raise ConfigurationError("transformed_h is defined on the boundary only")
    chi, Dy = flow.chi(i, x, y, with_derivative=True)
    Dx = float(_dx(flow, i, x, y))
    grad = float(np.ravel(domain.grad(np.atleast_1d(x)))[0]) if domain is not None else 0.0
    return (float(np.asarray(h(t, x, float(chi)))) + Dx * grad) / float(Dy)


def flow_bounds(field: FlowField) -> dict:
    """Fit C in |chi| <= |y| + C sup|B_T - B_t| and log D_y chi <= C sup|B|."""
    flow = field.flow
    tail = np.abs(np.concatenate([np.cumsum(flow.dB[::-1])[::-1], [0.0]]))
    sup = np.maximum.accumulate(tail[::-1])[::-1]
    excess = np.abs(field.chi) - np.abs(field.y_grid)[None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = np.where(sup[:, None, None] > 0, excess / sup[:, None, None], 0.0)
        c2 = np.where(sup[:, None, None] > 0, np.abs(np.log(field.Dy)) / sup[:, None, None], 0.0)
    return {"C_chi": float(np.max(c1)), "C_Dy": float(np.max(c2)), "sup_B": float(sup.max())}


# ---------------------------------------------------------------- BSDE-level reduction


def _check_affine_x_free(g: Callable, T: float, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, T, 64)
    x1, x2 = rng.uniform(-1, 1, 64), rng.uniform(-1, 1, 64)
    y1, y2 = rng.uniform(-2, 2, 64), rng.uniform(-2, 2, 64)
    if np.max(np.abs(g(t, x1, y1) - g(t, x2, y1))) > 1e-12:
        raise ConfigurationError("the BSDE-level reduction needs g independent of x")
    mid = g(t, x1, 0.5 * (y1 + y2))
    if np.max(np.abs(mid - 0.5 * (g(t, x1, y1) + g(t, x1, y2)))) > 1e-10 * (1 + np.max(np.abs(mid))):
        raise ConfigurationError("the BSDE-level reduction needs g affine in y")


class TransformedProblemFactory:
    """Reduce (f, h, g) with common noise to (f~, h~, 0) along one Brownian path.

    Valid for g affine in y and independent of x: then D_x chi = 0, chi is
    affine in y and Y = chi(t, U) with U solving the BSDE with generators
    f~(u, v) = (f(chi(u), D_y chi v) - g D_y g / 2) / D_y chi and
    h~(u) = h(chi(u)) / D_y chi.
    """

    def __init__(self, drivers, nodes, dB, y_range=(-10.0, 10.0), n_y: int = 81):
        if drivers.g is None:
            raise ConfigurationError("nothing to transform: g is absent")
        g3 = lambda t, x, y: np.asarray(drivers.g(t, x, y, np.zeros(np.shape(y) + (1,))), dtype=float) * np.ones_like(np.asarray(y, dtype=float))  # noqa: E731
        _check_affine_x_free(g3, float(nodes[-1]))
        probe = np.linspace(-1.0, 1.0, 16)
        gz = np.asarray(drivers.g(0.0, probe, probe, np.ones((16, 1)) * 0.7), dtype=float)
        if np.max(np.abs(gz - g3(0.0, probe, probe))) > 1e-12:
            raise ConfigurationError("the BSDE-level reduction needs g independent of z")
        self.drivers = drivers
        self.flow = Flow(g3, nodes, dB)
        self.field = self.flow.tabulate([0.0], np.linspace(*y_range, n_y))
        self.nodes = np.asarray(nodes, dtype=float)
        # affine flow: chi(t_i, y) = A_i y + C_i exactly
        c = self.field.chi[:, 0, :]
        yg = self.field.y_grid
        self.A = (c[:, -1] - c[:, 0]) / (yg[-1] - yg[0])
        self.C = c[:, 0] - self.A * yg[0]

    def node(self, t) -> np.ndarray:
        i = np.searchsorted(self.nodes, np.asarray(t, dtype=float) - 1e-12)
        return np.clip(i, 0, self.nodes.size - 1)

    def chi(self, t, u):
        i = self.node(t)
        return self.A[i] * u + self.C[i]

    def pi(self, t, y):
        i = self.node(t)
        return (y - self.C[i]) / self.A[i]

    def problem_drivers(self):
        from dataclasses import replace

        drv = self.drivers
        g = drv.g

        def f_t(t, x, u, v):
            i = self.node(t)
            A = self.A[i]
            y = A * np.asarray(u) + self.C[i]
            vv = np.asarray(v, dtype=float)
            zz = vv * (A[..., None] if np.ndim(A) else A)
            z0 = np.zeros(np.shape(y) + (1,))
            gv = np.asarray(g(t, x, y, z0), dtype=float)
            h_ = _FD_Y * (1.0 + np.abs(y))
            gy = (np.asarray(g(t, x, y + h_, z0)) - np.asarray(g(t, x, y - h_, z0))) / (2 * h_)
            return (np.asarray(drv.f(t, x, y, zz)) - 0.5 * gv * gy) / A

        h_t = None
        if drv.h is not None:
            def h_t(t, x, u):
                i = self.node(t)
                return np.asarray(drv.h(t, x, self.A[i] * np.asarray(u) + self.C[i])) / self.A[i]

        return replace(drv, f=f_t, h=h_t, g=None, lipschitz=None, lam=None, varrho=None, eta=None,
                       varphi=None, phi_hat=None, psi=None, zeta=None, rho=None, alpha=None, g_uses_yz=False)

    def transform_problem(self, problem):
        from dataclasses import replace

        from .bdsde import _as_callable_terminal

        term = _as_callable_terminal(problem.terminal)
        T = self.nodes[-1]
        obst = None
        if problem.obstacle is not None:
            # chi is increasing in y, so Y >= S iff U >= pi(S)
            obst = lambda t, x: self.pi(t, problem.obstacle(t, x))  # noqa: E731
        return replace(problem, terminal=lambda x: self.pi(T, term(x)), drivers=self.problem_drivers(),
                       obstacle=obst, label=problem.label + "+doss-sussmann")

    def map_back(self, U: np.ndarray) -> np.ndarray:
        return self.A[None, :] * U + self.C[None, :]
