from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgbdsde.regression import GROUP_CAP, ConditionalExpectation


def test_constant_state_gives_mean():
    ce = ConditionalExpectation(np.zeros(100))
    v = np.arange(100.0)
    assert ce.kind == "mean"
    assert np.allclose(ce.project(v), 49.5)


def test_discrete_state_uses_exact_group_means():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 10, 5000).astype(float)
    v = np.sin(x) + rng.normal(size=x.size)
    ce = ConditionalExpectation(x, degree=2)
    assert ce.kind == "groups"
    proj = ce.project(v)
    for k in range(10):
        assert np.allclose(proj[x == k], v[x == k].mean())


def test_polynomial_regression_is_exact_on_quadratics():
    rng = np.random.default_rng(1)
    x = rng.normal(size=4000)
    ce = ConditionalExpectation(x, degree=2)
    assert ce.kind == "ls"
    target = 1.0 - 2.0 * x + 0.5 * x**2
    assert np.allclose(ce.project(target), target, atol=1e-9)


def test_pathwise_is_identity():
    v = np.arange(5.0)
    assert np.array_equal(ConditionalExpectation(None, pathwise=True).project(v), v)


def test_joint_fit_recovers_increment_loadings():
    rng = np.random.default_rng(2)
    n = 20000
    x = rng.normal(size=n)
    dH = rng.normal(size=(n, 2)) * 0.1
    target = 0.3 + x + 2.0 * dH[:, 0] - 1.0 * dH[:, 1]
    ce = ConditionalExpectation(x, degree=2)
    out = ce.joint_fit(target, dH)
    E, Z = out[0], out[1]
    assert np.allclose(E, 0.3 + x, atol=1e-8)
    assert np.allclose(Z, [2.0, -1.0], atol=1e-8)


@given(st.integers(2, GROUP_CAP))
def test_group_projection_is_idempotent(k):
    rng = np.random.default_rng(k)
    x = rng.integers(0, k, 500).astype(float)
    v = rng.normal(size=500)
    ce = ConditionalExpectation(x)
    p = ce.project(v)
    assert np.allclose(ce.project(p), p)
