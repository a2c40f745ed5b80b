from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgbdsde.doss_sussmann import (
    Flow, TransformedProblemFactory, flow_bounds, flow_chi, flow_inverse_pi, transformed_f, transformed_h,
)
from rgbdsde.errors import ConfigurationError
from rgbdsde.levy import LevyCharacteristics
from rgbdsde.models import make_drivers
from rgbdsde.reflection import make_domain

NODES = np.linspace(0.0, 1.0, 21)


def _dB(seed=0):
    return np.random.default_rng(seed).normal(size=20) * np.sqrt(0.05)


def _tail(dB):
    return np.concatenate([np.cumsum(dB[::-1])[::-1], [0.0]])


def test_constant_g_shifts_by_tail():
    dB = _dB()
    chi = flow_chi(lambda t, x, y: 0.3 + 0 * y, dB, NODES, 0.0, np.array([-1.0, 0.5, 2.0]))
    assert np.allclose(chi, np.array([-1.0, 0.5, 2.0])[None, :] + 0.3 * _tail(dB)[:, None], atol=1e-12)


def test_linear_g_is_exponential():
    dB = _dB(1)
    chi = flow_chi(lambda t, x, y: y, dB, NODES, 0.0, np.array([1.0, -2.0]))
    assert np.allclose(chi, np.array([1.0, -2.0])[None, :] * np.exp(_tail(dB))[:, None], rtol=1e-9)


def test_zero_g_is_identity():
    chi = flow_chi(lambda t, x, y: 0 * y, _dB(), NODES, 0.0, np.array([0.3]))
    assert np.allclose(chi, 0.3)


def test_inverse_round_trip_and_derivatives():
    dB = _dB(2)
    flow = Flow(lambda t, x, y: 0.2 * np.sin(y) + 0.1 * x, NODES, dB)
    yg = np.linspace(-3, 3, 61)
    field = flow.tabulate([0.0, 0.5], yg)
    assert field.min_derivative() > 0
    assert field.fd_consistency() < 1e-6
    for i in (0, 7, 20):
        back = flow_inverse_pi(field, i, 0.5, field.chi[i, 1])
        assert np.max(np.abs(back - yg)) <= 1e-8
    bounds = flow_bounds(field)
    assert np.isfinite(bounds["C_chi"]) and np.isfinite(bounds["C_Dy"])


def test_inverse_constant_g_closed_form():
    dB = _dB(3)
    field = Flow(lambda t, x, y: -0.4 + 0 * y, NODES, dB).tabulate([0.0], np.linspace(-2, 2, 21))
    assert flow_inverse_pi(field, 4, 0.0, 1.0) == pytest.approx(1.0 + 0.4 * _tail(dB)[4], abs=1e-9)
    with pytest.raises(ConfigurationError):
        flow_inverse_pi(field, 4, 0.3, 1.0)


def test_transformed_f_collapses_without_atoms():
    dB = _dB(4)
    g0 = 0.5
    flow = Flow(lambda t, x, y: g0 + 0 * y, NODES, dB)
    chars = LevyCharacteristics(1.0, 0.3)
    f = lambda t, x, y, z: np.sin(y) + x  # noqa: E731
    phi = lambda t, x: 0 * x  # noqa: E731
    val = transformed_f(f, flow.g, flow, None, chars, lambda x: 1.0, phi, (5, 0.2, 0.7, np.zeros(0)))
    assert val == pytest.approx(np.sin(0.7 + g0 * _tail(dB)[5]) + 0.2, abs=1e-9)
    zero = transformed_f(lambda t, x, y, z: 0.0, lambda t, x, y: 0 * y, Flow(lambda t, x, y: 0 * y, NODES, dB),
                         None, chars, lambda x: 1.0, phi, (5, 0.2, 0.7, np.zeros(0)))
    assert zero == pytest.approx(0.0, abs=1e-12)


def test_transformed_h_collapses():
    dB = _dB(5)
    dom = make_domain("interval", 0.0, 1.0)
    h = lambda t, x, y: 2.0 * y + 1.0  # noqa: E731
    ident = Flow(lambda t, x, y: 0 * y, NODES, dB)
    assert transformed_h(h, ident, dom, (3, 1.0, 0.4)) == pytest.approx(1.8)
    shift = Flow(lambda t, x, y: 0.7 + 0 * y, NODES, dB)
    assert transformed_h(h, shift, dom, (3, 0.0, 0.4)) == pytest.approx(h(0, 0, 0.4 + 0.7 * _tail(dB)[3]), abs=1e-9)
    with pytest.raises(ConfigurationError):
        transformed_h(h, ident, dom, (3, 0.5, 0.4))


def test_factory_rejects_nonaffine_or_missing_g():
    dB = _dB()
    with pytest.raises(ConfigurationError):
        TransformedProblemFactory(make_drivers({}), NODES, dB)
    drv = make_drivers({"g": {"preset": "linear", "s": 0.3, "c": 0.1}})
    fac = TransformedProblemFactory(drv, NODES, dB)
    u = np.linspace(-1, 1, 5)
    assert np.allclose(fac.pi(0.25, fac.chi(0.25, u)), u)
    # chi(t, u) = u e^{0.3 (B_T - B_t)} + affine drift part
    assert np.allclose(fac.A, np.exp(0.3 * _tail(dB)), rtol=1e-9)


@given(st.floats(-1.0, 1.0), st.floats(-2.0, 2.0))
def test_flow_monotone_in_y(s, y):
    dB = _dB(6)
    flow = Flow(lambda t, x, v: s * np.tanh(v), NODES, dB)
    lo, hi = flow.chi(0, 0.0, np.array([y, y + 0.1]))
    assert hi > lo
