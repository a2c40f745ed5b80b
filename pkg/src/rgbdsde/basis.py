"""Orthonormalized power-jump martingale basis.

The polynomials q_n are orthonormal against the reference measure
pi0 = c0 delta_0 + sum_j e_j^2 lambda_j delta_{e_j}. All time dependence is
carried by the scaling gamma(t) = sqrt(r(t)) in proportional mode.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError
from .levy import LevyCharacteristics, _reference_time, merge_atoms

RANK_TOL = 1e-12
DIAGONAL_TOL = 1e-8


@dataclass(frozen=True)
class MartingaleBasis:
    """Lower-triangular alpha with q_n(e) = sum_k alpha[n, k] e^k (0-based k)."""

    alpha: np.ndarray
    support: np.ndarray
    weights: np.ndarray
    chars: LevyCharacteristics
    t_ref: float = 0.0

    @property
    def d(self) -> int:
        return self.alpha.shape[0]

    @property
    def proportional(self) -> bool:
        return self.chars.proportional

    def q(self, n: int, e):
        """q_n(e) for 1-based n."""
        coeffs = self.alpha[n - 1, :n]
        return np.polynomial.polynomial.polyval(e, coeffs)

    def p(self, n: int, e):
        return np.asarray(e) * self.q(n, e)

    def q_all(self, e) -> np.ndarray:
        """Matrix of q_n(e_m), shape (d, len(e))."""
        e = np.atleast_1d(np.asarray(e, dtype=float))
        V = np.vander(e, self.d, increasing=True)
        return self.alpha @ V.T

    def p_all(self, e) -> np.ndarray:
        e = np.atleast_1d(np.asarray(e, dtype=float))
        return self.q_all(e) * e[None, :]

    def p_atoms(self) -> np.ndarray:
        """p_n(e_j) for every atom of the characteristics, shape (d, J)."""
        return self.p_all(self.chars.sizes) if self.chars.n_atoms else np.zeros((self.d, 0))

    def p_coefficients(self) -> np.ndarray:
        """Coefficients of p_n in the monomial basis, row n holds e^0..e^d."""
        out = np.zeros((self.d, self.d + 1))
        out[:, 1:] = self.alpha
        return out

    def gram_reference(self) -> np.ndarray:
        Q = self.q_all(self.support)
        return (Q * self.weights[None, :]) @ Q.T


def _weighted_mgs(V: np.ndarray, w: np.ndarray):
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Columns of V are monomial values on the support; returns the coefficient
    matrix C (columns are monomial coefficients of the orthonormal vectors)
    and the indices of kept columns.
    """
    m, n = V.shape
    coeffs = []
    values = []
    kept = []
    for k in range(n):
        c = np.zeros(n)
        c[k] = 1.0
        v = V[:, k].astype(float).copy()
        norm0 = np.sqrt(np.sum(w * v * v))
        for _ in range(2):
            for cj, vj in zip(coeffs, values):
                proj = np.sum(w * vj * v)
                v = v - proj * vj
                c = c - proj * cj
        norm = np.sqrt(np.sum(w * v * v))
        if norm0 == 0 or norm <= RANK_TOL * max(norm0, 1.0):
            continue
        coeffs.append(c / norm)
        values.append(v / norm)
        kept.append(k)
    return coeffs, kept


def build_basis(chars: LevyCharacteristics) -> MartingaleBasis:
    atoms = merge_atoms(chars.atoms)
    if len(atoms) != chars.n_atoms:
        chars = chars.with_atoms(atoms)
    t_ref = _reference_time(chars)
    c0 = float(chars.diffusion(t_ref))
    pts, wts = [], []
    if c0 > 0:
        pts.append(0.0)
        wts.append(c0)
    for a in chars.atoms:
        w = a.size**2 * float(a.intensity(t_ref))
        if w > 0:
            pts.append(a.size)
            wts.append(w)
    if not pts:
        raise ConfigurationError("degenerate reference measure: all weights vanish")
    order = np.argsort(pts, kind="stable")
    support = np.asarray(pts, dtype=float)[order]
    weights = np.asarray(wts, dtype=float)[order]
    d_full = len(support)
    V = np.vander(support, d_full, increasing=True)
    coeffs, kept = _weighted_mgs(V, weights)
    if len(kept) < d_full:
        warnings.warn(f"basis rank reduced from {d_full} to {len(kept)}", stacklevel=2)
    if not kept or kept != list(range(len(kept))):
        raise NumericalError("monomial orthonormalization lost rank in a non-trailing direction")
    d = len(kept)
    alpha = np.zeros((d, d))
    for n, c in enumerate(coeffs):
        alpha[n, : n + 1] = c[: n + 1]
        if np.any(np.abs(c[n + 1 :]) > 0):
            raise NumericalError("Gram-Schmidt produced a non-triangular coefficient vector")
    # Gram-Schmidt on monomials gives positive leading coefficients; enforce anyway.
    signs = np.sign(np.diag(alpha))
    alpha = alpha * signs[:, None]
    return MartingaleBasis(alpha=alpha, support=support, weights=weights, chars=chars, t_ref=t_ref)


def instantaneous_gram(basis: MartingaleBasis, chars: LevyCharacteristics, t: float) -> np.ndarray:
    """G_ij(t) = c(t) q_i(0) q_j(0) + sum_atoms q_i(e) q_j(e) e^2 intensity(t)."""
    d = basis.d
    q0 = basis.q_all([0.0])[:, 0]
    G = float(chars.diffusion(t)) * np.outer(q0, q0)
    if chars.n_atoms:
        Q = basis.q_all(chars.sizes)
        w = chars.sizes**2 * np.asarray(chars.intensities(t), dtype=float)
        G = G + (Q * w[None, :]) @ Q.T
    return G.reshape(d, d)


def check_diagonal_bracket(basis: MartingaleBasis, chars: LevyCharacteristics, grid) -> tuple:
    """Return (diagonal?, max off-diagonal |G_ij|) over the grid nodes."""
    nodes = getattr(grid, "nodes", grid)
    worst = 0.0
    for t in np.asarray(nodes, dtype=float):
        G = instantaneous_gram(basis, chars, t)
        off = G - np.diag(np.diag(G))
        worst = max(worst, float(np.max(np.abs(off))) if off.size else 0.0)
    return worst <= DIAGONAL_TOL, worst


def gamma(basis: MartingaleBasis, k: int, t):
    """Scaling gamma^(k)(t); its square is the bracket density of H^(k)."""
    if not 1 <= k <= basis.d:
        raise ConfigurationError(f"basis index {k} outside 1..{basis.d}")
    chars = basis.chars
    if chars.proportional:
        return np.sqrt(chars.modulation_profile(t))
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(ts)
    for i, s in enumerate(ts):
        G = instantaneous_gram(basis, chars, s)
        off = G - np.diag(np.diag(G))
        if off.size and np.max(np.abs(off)) > DIAGONAL_TOL:
            raise NumericalError(
                "instantaneous Gram matrix is not diagonal; run check_diagonal_bracket before using gamma"
            )
        out[i] = np.sqrt(G[k - 1, k - 1])
    return out if np.ndim(t) else float(out[0])


def gamma_sq_integral(basis: MartingaleBasis, s: float, t: float) -> np.ndarray:
    """int_s^t gamma^(k)(u)^2 du for every k (the predicted bracket increment)."""
    chars = basis.chars
    q0 = basis.q_all([0.0])[:, 0]
    from .levy import _integrate

    out = q0**2 * _integrate(chars.diffusion, s, t)
    if chars.n_atoms:
        Q = basis.q_all(chars.sizes)
        lam_int = chars.intensity_integrals(s, t)
        out = out + (Q**2 * (chars.sizes**2 * lam_int)[None, :]).sum(axis=1)
    return out


def project_on_basis(basis: MartingaleBasis, chars: LevyCharacteristics, hbar, t: float) -> np.ndarray:
    """Density of <hbar(t, .), p_i> in L^2 of the jump measure at time t."""
    if not chars.n_atoms:
        return np.zeros(basis.d)
    e = chars.sizes
    hv = np.array([float(hbar(t, ej)) for ej in e])
    lam = np.asarray(chars.intensities(t), dtype=float)
    return basis.p_all(e) @ (hv * lam)


def orthonormality_error(basis: MartingaleBasis) -> float:
    G = basis.gram_reference()
    return float(np.max(np.abs(G - np.eye(basis.d))))
