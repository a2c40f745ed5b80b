from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgbdsde.basis import build_basis
from rgbdsde.errors import ConfigurationError
from rgbdsde.levy import JumpAtom, LevyCharacteristics
from rgbdsde.models import make_drivers
from rgbdsde.reflection import make_domain
from rgbdsde.sipde import (
    SIPDEProblem, SolutionField, compare_report, fd_obstacle_solve, fd_self_convergence, generator_apply,
    mc_representation, u1k_terms,
)
from rgbdsde.verify import sipde_test_problem


def _square_problem(sizes=(1.0,), lam=2.0, b=0.0):
    chars = LevyCharacteristics(1.0, b, 0.0, [JumpAtom(e, lam) for e in sizes])
    return SIPDEProblem(make_domain("interval", -2.0, 2.0), chars, lambda x: 1.0 + 0 * np.asarray(x),
                        make_drivers({}), lambda x: np.asarray(x) ** 2)


def test_generator_on_square():
    prob = _square_problem()
    assert generator_apply(prob, lambda t, x: x**2, 0.3, 0.5) == pytest.approx(2.0, abs=1e-6)
    assert generator_apply(prob, lambda t, x: 3.0 + 0 * x, 0.3, 0.5) == pytest.approx(0.0, abs=1e-12)


def test_generator_affine_is_transport():
    prob = _square_problem(b=0.7)
    assert generator_apply(prob, lambda t, x: 2.0 * x + 1, 0.3, 0.5) == pytest.approx(0.7 * 1.0 * 2.0, abs=1e-6)


def test_u1k_terms():
    prob = _square_problem()
    basis = build_basis(prob.chars)
    assert u1k_terms(prob, basis, lambda t, x: x**2, 0.0, 0.5) == pytest.approx([2 / np.sqrt(2)], abs=1e-6)
    assert u1k_terms(prob, basis, lambda t, x: x, 0.0, 0.5) == pytest.approx([0.0], abs=1e-9)
    none = SIPDEProblem(make_domain("interval", 0.0, 1.0), LevyCharacteristics(1.0, 0.2), lambda x: x,
                        make_drivers({}), lambda x: 0 * np.asarray(x))
    assert u1k_terms(none, None, lambda t, x: x**2, 0.0, 0.5).size == 0


def test_shift_outside_domain_rejected():
    with pytest.raises(ConfigurationError):
        generator_apply(_square_problem(), lambda t, x: x, 0.0, 1.5)


def test_model_restrictions():
    dom = make_domain("interval", 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        SIPDEProblem(dom, LevyCharacteristics(1.0, 0.0, 0.5), lambda x: x, make_drivers({}), lambda x: 0 * x)
    with pytest.raises(ConfigurationError):
        SIPDEProblem(dom, LevyCharacteristics(1.0, 0.0, 0.0, [JumpAtom(2.0, 1.0)]), lambda x: x, make_drivers({}),
                     lambda x: 0 * x)
    with pytest.raises(ConfigurationError):
        SIPDEProblem(dom, LevyCharacteristics(1.0), lambda x: x, make_drivers({}), lambda x: 0 * x,
                     obstacle=lambda t, x: 1.0 + 0 * x)


def _trivial(terminal, obstacle=None):
    base = sipde_test_problem()
    return SIPDEProblem(base.domain, base.chars, base.sigma, make_drivers({}), terminal, obstacle)


def test_mc_constant_terminal():
    prob = _trivial(lambda x: 0.4 + 0 * np.asarray(x))
    mc = mc_representation(prob, build_basis(prob.chars), [0.0, 0.5], [0.2, 0.8], n_paths=200, n_steps=20, seed=1)
    assert np.allclose(mc.u, 0.4)
    assert not mc.failures


def test_mc_and_fd_deterministic_snell_envelope():
    s0 = 0.6
    prob = _trivial(lambda x: 0 * np.asarray(x), lambda t, x: s0 * (1.0 - t) + 0 * np.asarray(x))
    basis = build_basis(prob.chars)
    mc = mc_representation(prob, basis, [0.0, 0.5], [0.2, 0.8], n_paths=200, n_steps=20, seed=1)
    assert np.allclose(mc.u, s0 * (1 - mc.t)[:, None], atol=1e-12)
    fd = fd_obstacle_solve(prob, basis, n_x=40, n_t=40)
    assert np.allclose(fd.u, s0 * (1 - fd.t)[:, None], atol=1e-12)


def test_fd_constant_terminal_without_atoms():
    prob = SIPDEProblem(make_domain("interval", 0.0, 1.0), LevyCharacteristics(1.0, 0.3), lambda x: x,
                        make_drivers({}), lambda x: 0.25 + 0 * np.asarray(x))
    fd = fd_obstacle_solve(prob, None, n_x=50, n_t=50)
    assert np.allclose(fd.u, 0.25)


def test_fd_self_convergence_ratio():
    prob = sipde_test_problem()
    rep = fd_self_convergence(prob, build_basis(prob.chars), [(0.0, 0.5), (0.5, 0.2)], n_x=50, n_t=50)
    assert rep["ratio"] <= 0.6


def test_fd_rejects_g():
    base = sipde_test_problem()
    prob = SIPDEProblem(base.domain, base.chars, base.sigma, make_drivers({"g": {"preset": "constant", "g0": 0.1}}),
                        base.terminal)
    with pytest.raises(ConfigurationError):
        fd_obstacle_solve(prob, None)


def test_parallel_matches_serial():
    prob = sipde_test_problem()
    basis = build_basis(prob.chars)
    kw = dict(n_paths=300, n_steps=20, seed=3)
    a = mc_representation(prob, basis, [0.0, 0.5], [0.3, 0.7], workers=1, **kw)
    b = mc_representation(prob, basis, [0.0, 0.5], [0.3, 0.7], workers=2, **kw)
    assert np.array_equal(a.u, b.u)
    assert np.all(a.u >= 0.6 - 0.3 * a.t[:, None] - 1e-9)


def test_probe_time_must_be_grid_node():
    prob = sipde_test_problem()
    with pytest.raises(ConfigurationError):
        mc_representation(prob, None, [0.013], [0.5], n_paths=10, n_steps=20)


@given(st.floats(-1.0, 1.0))
def test_compare_report_shift(shift):
    t, x = np.array([0.0, 0.5]), np.array([0.2, 0.8])
    u = np.arange(4.0).reshape(2, 2)
    a = SolutionField(t, x, u, np.zeros_like(u))
    same = compare_report(a, a)
    assert same["max_abs_diff"] == 0.0 and same["pass"]
    b = SolutionField(t, x, u + shift, np.zeros_like(u))
    rep = compare_report(a, b)
    assert all(p["abs_diff"] == pytest.approx(abs(shift)) for p in rep["points"])
