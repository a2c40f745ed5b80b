"""Joint sample paths of the Lévy driver and the backward Brownian motion.

Random streams are counter based (Philox) and keyed by
(seed, stream tag, atom key, path chunk), so a path's draws do not depend on
how many paths are requested or on which other atoms exist. Dropping an atom
(small-jump truncation) leaves the remaining jumps untouched.

L convention: L_t = int b + sqrt(c) W + big jumps + compensated small jumps,
which makes E[L_t] = m^(1)(t).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import MartingaleBasis
from .errors import ConfigurationError, NumericalError
from .levy import LevyCharacteristics, _integrate

CHUNK = 4096
TAG_JUMPS, TAG_DIFFUSION, TAG_BACKWARD = 1, 2, 3
_MAJORANT_SAMPLES = 9
_MAJORANT_SLACK = 1.01


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ConfigurationError("time grid needs at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ConfigurationError("time grid nodes must be strictly increasing")
        if nodes[0] != self.t0 or nodes[-1] != self.T:
            raise ConfigurationError("time grid nodes must span exactly [t0, T]")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, t0: float, T: float, n_steps: int) -> "TimeGrid":
        if n_steps < 1:
            raise ConfigurationError("n_steps must be >= 1")
        nodes = np.linspace(float(t0), float(T), int(n_steps) + 1)
        nodes[0], nodes[-1] = float(t0), float(T)
        return cls(float(t0), float(T), nodes)

    @property
    def n_steps(self) -> int:
        return self.nodes.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.nodes)

    def refine(self) -> "TimeGrid":
        mid = 0.5 * (self.nodes[:-1] + self.nodes[1:])
        nodes = np.empty(2 * self.n_steps + 1)
        nodes[0::2] = self.nodes
        nodes[1::2] = mid
        return TimeGrid(self.t0, self.T, nodes)


@dataclass(frozen=True)
class PathBatch:
    """Discretized joint paths; arrays are indexed (path, interval[, component])."""

    grid: TimeGrid
    n_paths: int
    seed: int
    sizes: np.ndarray
    counts: np.ndarray
    ev_path: np.ndarray
    ev_step: np.ndarray
    ev_time: np.ndarray
    ev_atom: np.ndarray
    dW: np.ndarray
    dB: np.ndarray
    dH: np.ndarray
    L: np.ndarray
    compensator: np.ndarray
    drift_int: np.ndarray
    backward_mode: str = "independent"

    @property
    def n_steps(self) -> int:
        return self.grid.n_steps

    @property
    def d(self) -> int:
        return self.dH.shape[-1]

    def dB_full(self) -> np.ndarray:
        """Backward increments broadcast to (n_paths, N)."""
        return np.broadcast_to(self.dB, (self.n_paths, self.n_steps))

    def B_nodes(self) -> np.ndarray:
        """B at the nodes relative to B_{t0} = 0, shape (rows, N+1)."""
        out = np.zeros((self.dB.shape[0], self.n_steps + 1))
        np.cumsum(self.dB, axis=1, out=out[:, 1:])
        return out

    def continuous_increment(self) -> np.ndarray:
        """Drift, diffusion and small-jump compensator part of dL, shape (n, N)."""
        small = np.abs(self.sizes) <= 1
        comp = self.compensator[:, small] @ self.sizes[small] if small.any() else np.zeros(self.n_steps)
        return self.dW + (self.drift_int - comp)[None, :]

    def jump_count(self) -> np.ndarray:
        return self.counts.sum(axis=(1, 2))


def _rng(seed: int, *key) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _atom_key(size: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(size)))[0]


def _chunks(n_paths: int):
    for c, start in enumerate(range(0, n_paths, CHUNK)):
        yield c, start, min(start + CHUNK, n_paths)


def _majorant(fn, nodes: np.ndarray) -> np.ndarray:
    s = np.linspace(0.0, 1.0, _MAJORANT_SAMPLES)
    pts = nodes[:-1, None] + s[None, :] * np.diff(nodes)[:, None]
    vals = np.asarray(fn(pts.ravel()), dtype=float).reshape(pts.shape)
    if not np.all(np.isfinite(vals)):
        raise NumericalError("intensity is not finite on the grid; cannot bound it for thinning")
    return _MAJORANT_SLACK * vals.max(axis=1)


def _simulate_atom(atom, nodes, n_paths, seed):
    """Return counts (n, N) and events (path, step, time) for one atom."""
    N = nodes.size - 1
    dt = np.diff(nodes)
    const = bool(getattr(atom.intensity, "is_constant", False))
    counts = np.zeros((n_paths, N), dtype=np.int64)
    ev_p, ev_s, ev_t = [], [], []
    if const:
        rate = float(atom.intensity(0.0))
        if not np.isfinite(rate):
            raise NumericalError("intensity is not finite")
        if rate == 0.0:
            return counts, (np.zeros(0, np.int64),) * 2 + (np.zeros(0),)
        mean = rate * dt
    else:
        M = _majorant(atom.intensity, nodes)
        mean = M * dt
    key = _atom_key(atom.size)
    for c, a, b in _chunks(n_paths):
        rng = _rng(seed, TAG_JUMPS, key, c)
        cand = rng.poisson(mean, size=(b - a, N))
        tot = int(cand.sum())
        pi, si = np.nonzero(cand)
        reps = cand[pi, si]
        p = np.repeat(pi, reps) + a
        s = np.repeat(si, reps)
        t = nodes[s] + rng.random(tot) * dt[s]
        if not const:
            lam = np.asarray(atom.intensity(t), dtype=float)
            if np.any(lam > M[s] * (1 + 1e-12)):
                raise NumericalError("intensity majorant underestimated; refine the grid")
            keep = rng.random(tot) * M[s] < lam
            p, s, t = p[keep], s[keep], t[keep]
        np.add.at(counts, (p, s), 1)
        ev_p.append(p)
        ev_s.append(s)
        ev_t.append(t)
    return counts, (np.concatenate(ev_p), np.concatenate(ev_s), np.concatenate(ev_t))


def h_increments_array(basis: MartingaleBasis, sizes, counts, compensator, dW) -> np.ndarray:
    """Vectorized basis increments, shape (n, N, d)."""
    sizes = np.asarray(sizes, dtype=float)
    alpha1 = basis.alpha[:, 0]
    if sizes.size:
        P = basis.p_all(sizes)  # (d, J)
        dH = np.einsum("pnj,kj->pnk", counts, P) - (compensator @ P.T)[None, :, :]
    else:
        dH = np.zeros(counts.shape[:2] + (basis.d,))
    if dW is not None:
        dH = dH + dW[:, :, None] * alpha1[None, None, :]
    return dH


def simulate_batch(
    chars: LevyCharacteristics,
    basis: Optional[MartingaleBasis],
    grid: TimeGrid,
    n_paths: int,
    seed: int,
    backward: str = "independent",
    backward_increments: Optional[np.ndarray] = None,
) -> PathBatch:
    """Simulate n_paths joint paths on the grid.

    backward="common" draws one Brownian path shared by every path; an
    explicit array of increments may be injected instead.
    """
    if n_paths < 1:
        raise ConfigurationError("n_paths must be positive")
    if backward not in ("independent", "common"):
        raise ConfigurationError(f"unknown backward mode {backward!r}")
    nodes = grid.nodes
    if nodes[-1] > chars.T + 1e-12 or nodes[0] < 0:
        raise ConfigurationError("grid leaves the horizon of the characteristics")
    N = grid.n_steps
    J = chars.n_atoms
    sizes = chars.sizes
    counts = np.zeros((n_paths, N, J), dtype=np.int32)
    evs = []
    for j, atom in enumerate(chars.atoms):
        cj, (p, s, t) = _simulate_atom(atom, nodes, n_paths, seed)
        counts[:, :, j] = cj
        evs.append((p, s, t, np.full(p.size, j, dtype=np.int64)))
    if evs:
        ev_p, ev_s, ev_t, ev_a = (np.concatenate(x) for x in zip(*evs))
    else:
        ev_p = ev_s = ev_a = np.zeros(0, np.int64)
        ev_t = np.zeros(0)
    order = np.lexsort((ev_a, ev_t, ev_p))
    ev_p, ev_s, ev_t, ev_a = ev_p[order], ev_s[order], ev_t[order], ev_a[order]

    comp = np.zeros((N, J))
    for j, atom in enumerate(chars.atoms):
        comp[:, j] = [_integrate(atom.intensity, nodes[i], nodes[i + 1]) for i in range(N)]
    c_int = np.array([_integrate(chars.diffusion, nodes[i], nodes[i + 1]) for i in range(N)])
    b_int = np.array([_integrate(chars.drift, nodes[i], nodes[i + 1]) for i in range(N)])

    dW = np.zeros((n_paths, N))
    if np.any(c_int > 0):
        sd = np.sqrt(c_int)
        for c, a, b in _chunks(n_paths):
            dW[a:b] = _rng(seed, TAG_DIFFUSION, c).standard_normal((b - a, N)) * sd[None, :]

    dt = grid.dt
    if backward_increments is not None:
        dB = np.asarray(backward_increments, dtype=float)
        if dB.ndim == 1:
            dB = dB[None, :]
        if dB.shape[1] != N or dB.shape[0] not in (1, n_paths):
            raise ConfigurationError("injected backward increments have the wrong shape")
        backward = "common" if dB.shape[0] == 1 else "independent"
        dB = dB.copy()
    elif backward == "common":
        dB = _rng(seed, TAG_BACKWARD, 0).standard_normal((1, N)) * np.sqrt(dt)[None, :]
    else:
        dB = np.empty((n_paths, N))
        for c, a, b in _chunks(n_paths):
            dB[a:b] = _rng(seed, TAG_BACKWARD, c).standard_normal((b - a, N)) * np.sqrt(dt)[None, :]

    if basis is None:
        dH = np.zeros((n_paths, N, 0))
    else:
        dH = h_increments_array(basis, sizes, counts, comp, dW if np.any(c_int > 0) else None)
    dL = dW + b_int[None, :]
    if J:
        dL = dL + counts @ sizes
        small = np.abs(sizes) <= 1
        if small.any():
            dL = dL - (comp[:, small] @ sizes[small])[None, :]
    L = np.zeros((n_paths, N + 1))
    np.cumsum(dL, axis=1, out=L[:, 1:])
    for arr in (counts, dW, dB, dH, L, comp, b_int, ev_p, ev_s, ev_t, ev_a):
        arr.setflags(write=False)
    return PathBatch(
        grid=grid, n_paths=int(n_paths), seed=int(seed), sizes=sizes, counts=counts,
        ev_path=ev_p, ev_step=ev_s, ev_time=ev_t, ev_atom=ev_a,
        dW=dW, dB=dB, dH=dH, L=L, compensator=comp, drift_int=b_int, backward_mode=backward,
    )


def h_increments(basis: MartingaleBasis, chars: LevyCharacteristics, batch: PathBatch, path: int, i: int) -> np.ndarray:
    """Basis increments of one path over [tau_i, tau_{i+1}]."""
    if not 0 <= i < batch.n_steps:
        raise ConfigurationError(f"interval index {i} outside 0..{batch.n_steps - 1}")
    dW = batch.dW[path : path + 1, i : i + 1]
    return h_increments_array(
        basis, chars.sizes, batch.counts[path : path + 1, i : i + 1], batch.compensator[i : i + 1], dW
    )[0, 0]


def backward_integral(dB, G, start: int = 0):
    """sum_i G(tau_{i+1}) dB_i over intervals start..N-1; G holds node values tau_{start+1}..tau_N."""
    dB = np.asarray(dB, dtype=float)[..., start:]
    G = np.asarray(G, dtype=float)
    if G.shape[-1] != dB.shape[-1]:
        raise ConfigurationError(f"integrand has {G.shape[-1]} values, expected {dB.shape[-1]}")
    return np.sum(G * dB, axis=-1)


def forward_integral(dH, Z, start: int = 0):
    """sum_i sum_k Z^(k)(tau_i) dH^(k)_i; Z holds left-endpoint values tau_start..tau_{N-1}."""
    dH = np.asarray(dH, dtype=float)[..., start:, :]
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == dH.ndim - 1 and dH.shape[-1] == 1:
        Z = Z[..., None]
    if Z.shape[-2:] != dH.shape[-2:]:
        raise ConfigurationError(f"Z has shape {Z.shape}, expected trailing {dH.shape[-2:]}")
    return np.sum(Z * dH, axis=(-2, -1))
