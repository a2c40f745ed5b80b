from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from rgbdsde.errors import ConfigurationError
from rgbdsde.yosida import truncate_generator, yosida_apply, yosida_property_suite, yosida_resolvent


def test_linear_closed_form():
    phi = lambda y: -np.asarray(y)  # noqa: E731
    assert yosida_resolvent(phi, 3.0, 0.5) == pytest.approx(2.0)
    assert yosida_apply(phi, 3.0, 0.5) == pytest.approx(-2.0)


def test_cubic_against_bracketing_oracle():
    phi = lambda y: -np.asarray(y) ** 3  # noqa: E731
    assert yosida_resolvent(phi, 0.0, 1.0) == 0.0
    ref = brentq(lambda J: J + J**3 - 2.0, 0.0, 2.0, xtol=1e-14)
    assert yosida_resolvent(phi, 2.0, 1.0) == pytest.approx(ref, abs=1e-12)


def test_nonpositive_delta_rejected():
    with pytest.raises(ConfigurationError):
        yosida_resolvent(lambda y: -y, 1.0, 0.0)


def test_truncation_caps_value_at_zero():
    f = lambda t, y: np.asarray(y) + 5.0  # noqa: E731
    fp = truncate_generator(f, 3.0)
    assert fp(0.0, 1.5) == pytest.approx(4.5)
    g = lambda t, y: 2.0 * np.asarray(y)  # noqa: E731
    assert truncate_generator(g, 1.0)(0.0, 0.7) == pytest.approx(1.4)


def test_property_suite_cubic():
    rep = yosida_property_suite(lambda y: -np.asarray(y) ** 3 - np.asarray(y), n=300)
    for key in ("monotone", "lipschitz", "domination", "convergence", "cross", "resolvent_ok"):
        assert rep[key], key


@given(st.floats(-5.0, 5.0), st.floats(0.01, 3.0))
def test_domination_and_fixed_point(y, delta):
    phi = lambda v: -np.asarray(v) ** 3  # noqa: E731
    J = yosida_resolvent(phi, y, delta)
    assert J - delta * phi(J) == pytest.approx(y, abs=1e-9 * (1 + abs(y)))
    assert abs(yosida_apply(phi, y, delta)) <= abs(phi(y)) + 1e-12
