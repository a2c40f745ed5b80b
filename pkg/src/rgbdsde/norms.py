"""Weight processes, weighted solution norms and the a-priori estimate harness."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError


def phi_weights(nodes, kappa, a2, theta: float, mu: float) -> np.ndarray:
    """Phi = exp(theta V + mu kappa) at the nodes, shape like kappa."""
    nodes = np.asarray(nodes, dtype=float)
    a2 = np.broadcast_to(np.asarray(a2, dtype=float), (nodes.size,))
    V = np.zeros(nodes.size)
    V[1:] = np.cumsum(0.5 * (a2[:-1] + a2[1:]) * np.diff(nodes))
    return np.exp(theta * V[None, :] + mu * np.asarray(kappa, dtype=float))


@dataclass(frozen=True)
class WeightProcess:
    theta: float
    mu: float
    a2: np.ndarray
    V: np.ndarray
    kappa: np.ndarray
    Phi: np.ndarray
    nodes: np.ndarray

    @property
    def Q(self) -> np.ndarray:
        return self.V[None, :] + self.kappa


def build_weights(nodes, kappa, a2, theta: float, mu: float, eps: float = 1e-6) -> WeightProcess:
    """Weights on the grid; a2 may be a constant, node values or a function of t."""
    nodes = np.asarray(nodes, dtype=float)
    if callable(a2):
        a2 = np.asarray(a2(nodes), dtype=float)
    a2 = np.broadcast_to(np.asarray(a2, dtype=float), nodes.shape).copy()
    if np.any(a2 < eps):
        raise ConfigurationError(f"a^2 must stay above epsilon={eps}; got min {a2.min():.3g}")
    if theta <= 0 or mu <= 0:
        raise ConfigurationError("theta and mu must be positive")
    kappa = np.atleast_2d(np.asarray(kappa, dtype=float))
    V = np.zeros(nodes.size)
    V[1:] = np.cumsum(0.5 * (a2[:-1] + a2[1:]) * np.diff(nodes))
    Phi = np.exp(theta * V[None, :] + mu * kappa)
    return WeightProcess(theta, mu, a2, V, kappa, Phi, nodes)


def weighted_norms(sol, weights: WeightProcess) -> dict:
    """MC estimates of the S^2, H^{2,Q}, H^{2,l2} norms (squared) and E|K_T|^2."""
    Phi = np.broadcast_to(weights.Phi, sol.Y.shape)
    dt = np.diff(weights.nodes)
    dk = np.diff(np.broadcast_to(weights.kappa, sol.Y.shape), axis=1)
    Y = sol.Y
    s2 = np.mean(np.max(Phi * Y**2, axis=1))
    dQ = weights.a2[None, :-1] * dt[None, :] + dk
    h2q = np.mean(np.sum(Phi[:, :-1] * Y[:, :-1] ** 2 * dQ, axis=1))
    if sol.Z.size:
        h2l = np.mean(np.sum(Phi[:, :-1, None] * sol.Z**2 * sol.bracket[None, :, :], axis=(1, 2)))
    else:
        h2l = 0.0
    a2k = np.mean(sol.K[:, -1] ** 2)
    out = {"S2": float(s2), "H2Q": float(h2q), "H2l2": float(h2l), "A2": float(a2k)}
    out["total"] = float(sum(out.values()))
    out["finite"] = bool(np.isfinite(out["total"]))
    return out


def distance_norms(sol1, sol2, weights: WeightProcess) -> dict:
    """Weighted distances between two solutions on the same paths."""

    class _Diff:
        Y = sol1.Y - sol2.Y
        Z = sol1.Z - sol2.Z
        K = sol1.K - sol2.K
        bracket = sol1.bracket

    return weighted_norms(_Diff, weights)


def theta_admissible(theta: float, alpha: float) -> bool:
    return theta > 4.0 + 2.0 / (1.0 - 2.0 * alpha)


def apriori_check(problem, sol, weights: WeightProcess, batch=None, alpha: Optional[float] = None) -> dict:
    """Left side of the a-priori estimate, its data functional and their ratio."""
    drv = problem.drivers
    alpha = drv.alpha if alpha is None else alpha
    alpha = 0.0 if alpha is None else alpha
    if not theta_admissible(weights.theta, alpha):
        raise ConfigurationError(
            f"theta={weights.theta} is not admissible for alpha={alpha}: need theta > {4 + 2 / (1 - 2 * alpha):.4g}"
        )
    norms = weighted_norms(sol, weights)
    lhs = norms["S2"] + norms["H2Q"] + norms["H2l2"] + norms["A2"]
    nodes = weights.nodes
    dt = np.diff(nodes)
    n = sol.Y.shape[0]
    Phi = np.broadcast_to(weights.Phi, sol.Y.shape)
    dk = np.diff(np.broadcast_to(weights.kappa, sol.Y.shape), axis=1)
    state = sol.state
    terms = {}
    terms["xi"] = float(np.mean(Phi[:, -1] * sol.Y[:, -1] ** 2))
    d = sol.Z.shape[2]
    zero_z = np.zeros((n, d))
    f0 = np.stack([np.asarray(drv.f(nodes[i], state[:, i], np.zeros(n), zero_z), dtype=float) * np.ones(n)
                   for i in range(nodes.size - 1)], axis=1)
    terms["f0"] = float(np.mean(np.sum(Phi[:, :-1] * f0**2 / weights.a2[None, :-1] * dt[None, :], axis=1)))
    if drv.h is not None:
        h0 = np.stack([np.asarray(drv.h(nodes[i], state[:, i], np.zeros(n)), dtype=float) * np.ones(n)
                       for i in range(nodes.size - 1)], axis=1)
        terms["h0"] = float(np.mean(np.sum(Phi[:, :-1] * h0**2 * dk, axis=1)))
    else:
        terms["h0"] = 0.0
    if drv.g is not None:
        g0 = np.stack([np.asarray(drv.g(nodes[i], state[:, i], np.zeros(n), zero_z), dtype=float) * np.ones(n)
                       for i in range(nodes.size - 1)], axis=1)
        terms["g0"] = float(np.mean(np.sum(Phi[:, :-1] * g0**2 * dt[None, :], axis=1)))
    else:
        terms["g0"] = 0.0
    if sol.obstacle is not None:
        terms["obstacle"] = float(np.mean(np.max((Phi * np.maximum(sol.obstacle, 0.0)) ** 2, axis=1)))
    else:
        terms["obstacle"] = 0.0
    rhs = float(sum(terms.values()))
    if rhs == 0.0 and lhs == 0.0:
        ratio = 0.0
        trivial = True
    else:
        ratio = lhs / rhs if rhs > 0 else float("inf")
        trivial = False
    return {"lhs": float(lhs), "rhs_data": rhs, "terms": terms, "ratio": float(ratio),
            "finite": bool(np.isfinite(ratio)), "trivial": trivial, "theta": weights.theta, "mu": weights.mu}


def ito_remainder(batch, theta: float = 1.0, mu: float = 0.5, a2: float = 1.0, y0: float = 1.0,
                  F: float = 1.0, Hk: float = 0.5, G: float = 0.3, Zc: float = 0.5, kappa_rate: float = 1.0) -> np.ndarray:
    """Pathwise remainder of the discretized expansion of Phi |Y|^2.

    Y is assembled from drift, dkappa (kappa_t = kappa_rate t), backward dB and
    dH parts. The remainder is Phi_N Y_N^2 - Phi_0 Y_0^2 minus the integral
    terms: Phi Y^2 (theta dV + mu dkappa), 2 Phi Y dY, and Phi d[M] with the
    realized bracket of the martingale part M.
    """
    nodes = batch.grid.nodes
    dt = np.diff(nodes)
    dk = kappa_rate * dt
    dM = G * batch.dB_full()
    if batch.d:
        dM = dM + Zc * batch.dH.sum(axis=2)
    A = (F * dt + Hk * dk)[None, :]
    dY = A + dM
    n = batch.n_paths
    Y = np.empty((n, nodes.size))
    Y[:, 0] = y0
    np.cumsum(dY, axis=1, out=Y[:, 1:])
    Y[:, 1:] += y0
    kappa = np.concatenate([[0.0], np.cumsum(dk)])
    logphi = theta * a2 * nodes + mu * kappa
    Phi = np.exp(logphi)[None, :]
    lhs = Phi[:, -1] * Y[:, -1] ** 2 - Phi[:, 0] * Y[:, 0] ** 2
    Yl = Y[:, :-1]
    Pl = Phi[:, :-1]
    terms = Pl * Yl**2 * (theta * a2 * dt + mu * dk)[None, :] + 2 * Pl * Yl * dY + Pl * dM**2
    return lhs - terms.sum(axis=1)
