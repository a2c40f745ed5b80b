"""Conditional expectations given the state at one time node.

Least squares on standardized polynomial features, with two exact shortcuts:
a constant state gives the sample mean, and a discrete state with few
distinct values gives group means, the exact conditional expectation.
"""

from __future__ import annotations

import itertools

import numpy as np
import scipy.linalg

from .errors import RegressionError

_CONST_TOL = 1e-14
# discrete states with at most this many distinct values are conditioned exactly by group means
GROUP_CAP = 64


def _features(x: np.ndarray, degree: int) -> np.ndarray:
    """Monomials of total degree <= degree in the standardized columns of x."""
    n, l = x.shape
    cols = [np.ones(n)]
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(l), deg):
            cols.append(np.prod(x[:, combo], axis=1))
    return np.column_stack(cols)


class ConditionalExpectation:
    """Projection operator E[. | state] built once and reused for several targets."""

    def __init__(self, state, degree: int = 2, pathwise: bool = False):
        self.pathwise = pathwise
        self.degree_used = None
        self.kind = "pathwise" if pathwise else None
        if pathwise:
            return
        x = np.asarray(state, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        self.n = x.shape[0]
        spread = np.ptp(x, axis=0)
        scale = 1.0 + np.abs(x).max(axis=0)
        varying = spread > _CONST_TOL * scale
        if not varying.any():
            self.kind = "mean"
            return
        x = x[:, varying]
        n_feat = _features(np.zeros((1, x.shape[1])), degree).shape[1]
        uniq, inverse = np.unique(x, axis=0, return_inverse=True)
        if uniq.shape[0] <= max(n_feat, GROUP_CAP):
            self.kind = "groups"
            self.inverse = inverse.ravel()
            self.counts = np.bincount(self.inverse, minlength=uniq.shape[0])
            return
        mu = x.mean(axis=0)
        sd = x.std(axis=0)
        z = (x - mu) / sd
        for deg in range(degree, 0, -1):
            A = _features(z, deg)
            Q, R = np.linalg.qr(A)
            diag = np.abs(np.diag(R))
            if diag.min() > 1e-10 * diag.max():
                self.kind = "ls"
                self.Q = Q
                self.degree_used = deg
                return
        raise RegressionError("regression design is rank deficient even at degree 1")

    def basis_matrix(self) -> np.ndarray:
        if self.kind == "mean":
            return np.ones((self.n, 1))
        if self.kind == "groups":
            return np.eye(self.counts.size)[self.inverse]
        if self.kind == "ls":
            return self.Q
        raise RegressionError("no basis matrix in pathwise mode")

    def joint_fit(self, target, dH):
        """Regress target on [phi(X), phi(X) dH^(k)]; returns (E, Z) with target ~ E + sum_k Z_k dH^(k)."""
        target = np.asarray(target, dtype=float)
        n = target.shape[0]
        if self.kind == "pathwise" or dH.shape[1] == 0:
            return self.project(target), np.zeros((n, dH.shape[1]))
        if self.kind == "groups":
            return self._group_fit(target, dH)
        Fx = self.basis_matrix()
        p = Fx.shape[1]
        cols = np.concatenate([Fx * dH[:, k : k + 1] for k in range(dH.shape[1])], axis=1)
        # increment columns collinear with the state features (e.g. a state group
        # with no jumps in the interval) carry no information on Z and are dropped
        resid = cols - Fx @ np.linalg.lstsq(Fx, cols, rcond=None)[0]
        _, R, piv = scipy.linalg.qr(resid, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        scale = max(float(np.linalg.norm(cols, axis=0).max()), 1e-300)
        keep = np.sort(piv[diag > 1e-9 * scale])
        A = np.concatenate([Fx, cols[:, keep]], axis=1)
        coef, _, rank, _ = np.linalg.lstsq(A, target, rcond=None)
        if rank < A.shape[1]:
            raise RegressionError("joint regression on state and basis increments is rank deficient")
        full = np.zeros(cols.shape[1])
        full[keep] = coef[p:]
        self.dropped_columns = int(cols.shape[1] - keep.size)
        E = Fx @ coef[:p]
        Z = np.stack([Fx @ full[p * k : p * (k + 1)] for k in range(dH.shape[1])], axis=1)
        return E, Z

    def _group_fit(self, target, dH):
        """Per-group regression of target on [1, dH] through accumulated normal equations."""
        G, d = self.counts.size, dH.shape[1]
        A = np.concatenate([np.ones((dH.shape[0], 1)), dH], axis=1)
        M = np.zeros((G, d + 1, d + 1))
        np.add.at(M, self.inverse, A[:, :, None] * A[:, None, :])
        v = np.zeros((G, d + 1))
        np.add.at(v, self.inverse, A * target[:, None])
        coef = np.zeros((G, d + 1))
        coef[:, 0] = v[:, 0] / self.counts
        # a group whose increments are (near) collinear with the constant leaves Z unidentified: Z = 0
        cond = np.linalg.cond(M) if G else np.zeros(0)
        ok = (self.counts > d + 1) & (cond < 1e10)
        if np.any(ok):
            coef[ok] = np.linalg.solve(M[ok], v[ok][..., None])[..., 0]
        self.dropped_groups = int(G - ok.sum())
        E = coef[self.inverse, 0]
        Z = coef[self.inverse, 1:]
        return E, Z

    def project(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if self.kind == "pathwise":
            return v.copy()
        if self.kind == "mean":
            return np.broadcast_to(v.mean(axis=0), v.shape).copy()
        if self.kind == "groups":
            flat = v.reshape(v.shape[0], -1)
            sums = np.zeros((self.counts.size, flat.shape[1]))
            np.add.at(sums, self.inverse, flat)
            means = sums / self.counts[:, None]
            return means[self.inverse].reshape(v.shape)
        flat = v.reshape(v.shape[0], -1)
        fitted = self.Q @ (self.Q.T @ flat)
        return fitted.reshape(v.shape)
