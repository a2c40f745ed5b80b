from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgbdsde.basis import build_basis
from rgbdsde.errors import ConfigurationError, JumpInvarianceError, StepSizeError
from rgbdsde.levy import JumpAtom, LevyCharacteristics
from rgbdsde.paths import TimeGrid, simulate_batch
from rgbdsde.reflection import (
    check_jump_invariance, interior_sphere_check, make_domain, moment_report, solve_paths, step_reflect,
    truncate_small_jumps,
)


def test_inward_normals():
    iv = make_domain("interval", 0.0, 1.0)
    assert np.ravel(iv.grad(np.array([0.0]))) == pytest.approx([1.0])
    assert np.ravel(iv.grad(np.array([1.0]))) == pytest.approx([-1.0])
    ball = make_domain("ball", np.zeros(2), 1.0)
    p = np.array([[0.6, 0.8]])
    assert np.ravel(ball.grad(p)) == pytest.approx([-0.6, -0.8])


def test_interior_sphere_holds_on_interval():
    ok = interior_sphere_check(make_domain("interval", 0.0, 1.0), n_pairs=1000)
    assert ok[0]


@pytest.mark.parametrize("x, inc, expected, dk", [(0.5, -0.2, 0.3, 0.0), (0.1, -0.3, 0.0, 0.2)])
def test_step_reflect_interval(x, inc, expected, dk):
    y, k = step_reflect(make_domain("interval", 0.0, 1.0), np.array([x]), np.array([inc]))
    assert float(np.ravel(y)[0]) == pytest.approx(expected)
    assert float(np.ravel(k)[0]) == pytest.approx(dk)


def test_step_reflect_ball_as_interval():
    y, k = step_reflect(make_domain("ball", np.zeros(1), 1.0), np.array([0.9]), np.array([0.3]))
    assert float(np.ravel(y)[0]) == pytest.approx(1.0)
    assert float(np.ravel(k)[0]) == pytest.approx(0.2)
    with pytest.raises(StepSizeError):
        step_reflect(make_domain("ball", np.zeros(1), 1.0), np.array([0.0]), np.array([1.5]))


def test_deterministic_drift_clamp_is_exact():
    sigma0, b, x0 = 0.8, -1.0, 0.3
    chars = LevyCharacteristics(1.0, b, 0.0)
    grid = TimeGrid.uniform(0.0, 1.0, 20)
    batch = simulate_batch(chars, None, grid, 3, seed=0)
    paths = solve_paths(make_domain("interval", 0.0, 1.0), chars, None, grid, lambda x: sigma0 + 0 * x,
                        (0.0, np.array([x0])), batch)
    X = paths.state()
    X = X if X.ndim == 2 else X[..., 0]
    free = x0 + sigma0 * b * grid.nodes
    assert np.allclose(X, np.maximum(free, 0.0)[None, :], atol=1e-12)
    assert np.allclose(paths.kappa, np.maximum(-free, 0.0)[None, :], atol=1e-12)


def test_zero_sigma_freezes_state():
    chars = LevyCharacteristics(1.0, 0.4, 0.5, [JumpAtom(0.2, 1.0)])
    basis = build_basis(chars)
    grid = TimeGrid.uniform(0.0, 1.0, 10)
    batch = simulate_batch(chars, basis, grid, 20, seed=1)
    paths = solve_paths(make_domain("interval", 0.0, 1.0), chars, basis, grid, lambda x: 0 * x,
                        (0.0, np.array([0.4])), batch)
    assert np.allclose(paths.state(), 0.4)
    assert np.all(paths.kappa == 0)


def test_invariance_and_complementarity_on_stochastic_model():
    chars = LevyCharacteristics(1.0, 0.3, 0.2, [JumpAtom(-0.5, 1.0), JumpAtom(0.5, 1.0)])
    basis = build_basis(chars)
    grid = TimeGrid.uniform(0.0, 1.0, 50)
    batch = simulate_batch(chars, basis, grid, 500, seed=4)
    sigma = lambda x: 0.5 - 0.5 * np.asarray(x) ** 2  # noqa: E731
    paths = solve_paths(make_domain("interval", -1.0, 1.0), chars, basis, grid, sigma, (0.0, np.array([0.0])), batch)
    assert paths.min_psi() >= -1e-12
    assert paths.complementarity_defect() == 0.0
    rep = moment_report(paths, 4.0, 1.0)
    assert all(np.isfinite(v) for v in rep.values() if isinstance(v, float))


def test_jump_invariance_violation_named():
    chars = LevyCharacteristics(1.0, 0.0, 0.0, [JumpAtom(0.5, 1.0)])
    with pytest.raises(JumpInvarianceError):
        check_jump_invariance(make_domain("interval", 0.0, 1.0), chars, lambda x: 1.0 + 0 * np.asarray(x))


def test_truncate_small_jumps():
    chars = LevyCharacteristics(1.0, 0.1, 0.0, [JumpAtom(0.05, 1.0), JumpAtom(0.5, 2.0)])
    cut = truncate_small_jumps(chars, 10)
    assert list(cut.sizes) == [0.5]
    assert float(cut.drift(0.3)) == pytest.approx(0.1)
    assert truncate_small_jumps(chars, 100).n_atoms == 2
    with pytest.raises(ConfigurationError):
        truncate_small_jumps(chars, 0)


@given(st.floats(0.0, 1.0), st.floats(-2.0, 2.0))
def test_step_stays_in_closure(x, inc):
    y, k = step_reflect(make_domain("interval", 0.0, 1.0), np.array([x]), np.array([inc]))
    y = float(np.ravel(y)[0])
    assert 0.0 <= y <= 1.0
    assert float(np.ravel(k)[0]) >= 0.0
    assert float(np.ravel(k)[0]) == pytest.approx(abs(x + inc - y))
