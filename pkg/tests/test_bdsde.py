from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgbdsde.basis import build_basis
from rgbdsde.bdsde import (
    RGBDSDEProblem, SolverConfig, compare_solutions, equation_residuals, picard_solve, solve_lipschitz, solve_reflected,
)
from rgbdsde.models import make_drivers, make_obstacle, two_atom_chars
from rgbdsde.paths import TimeGrid, simulate_batch
from rgbdsde.verify import standard_batch, standard_problem


def _batch(N=20, n=200, seed=3, backward="independent"):
    chars = two_atom_chars()
    basis = build_basis(chars)
    return basis, simulate_batch(chars, basis, TimeGrid.uniform(0.0, 1.0, N), n, seed, backward=backward)


def test_linear_ode_value():
    basis, batch = _batch(N=200, n=50)
    prob = RGBDSDEProblem(1.0, make_drivers({"f": {"preset": "linear", "a": 1.0}}))
    sol = solve_lipschitz(prob, batch, basis)
    assert abs(sol.Y0 - np.e) <= 0.01


def test_constant_terminal_is_fixed():
    basis, batch = _batch()
    sol = solve_lipschitz(RGBDSDEProblem(0.7, make_drivers({})), batch, basis)
    assert np.allclose(sol.Y, 0.7)
    assert np.allclose(sol.Z, 0.0)


def test_constant_g_telescopes():
    basis, batch = _batch(backward="common")
    g0 = 0.4
    prob = RGBDSDEProblem(0.2, make_drivers({"g": {"preset": "constant", "g0": g0}}))
    sol = solve_lipschitz(prob, batch, basis)
    B = batch.B_nodes()
    expected = 0.2 + g0 * (B[:, -1:] - B)
    assert np.allclose(sol.Y, expected, atol=1e-12)
    assert np.allclose(sol.Z, 0.0, atol=1e-10)


def test_decreasing_obstacle_is_the_solution():
    basis, batch = _batch()
    s0 = 0.8
    prob = RGBDSDEProblem(0.0, make_drivers({}), obstacle=make_obstacle({"preset": "decreasing_linear", "s0": s0}, 1.0))
    sol = solve_reflected(prob, batch, basis)
    nodes = batch.grid.nodes
    assert np.allclose(sol.Y, s0 * (1 - nodes)[None, :], atol=1e-12)
    assert np.allclose(sol.K, s0 * nodes[None, :], atol=1e-12)
    assert np.allclose(sol.Z, 0.0, atol=1e-10)


def test_never_binding_obstacle_matches_lipschitz_exactly():
    basis, batch = _batch(backward="common")
    drivers = make_drivers({"f": {"preset": "linear", "a": -1.0, "z_coef": [0.5]}, "g": {"preset": "linear", "s": 0.3}})
    terminal = lambda x: np.maximum(0.5 - x, 0.0)  # noqa: E731
    free = solve_lipschitz(RGBDSDEProblem(terminal, drivers), batch, basis)
    low = make_obstacle({"preset": "constant", "value": -1e6}, 1.0)
    refl = solve_reflected(RGBDSDEProblem(terminal, drivers, obstacle=low), batch, basis)
    assert np.array_equal(free.Y, refl.Y)
    assert np.all(refl.K == 0)


def test_picard_immediate_for_z_free_model():
    basis, batch = _batch()
    prob = RGBDSDEProblem(lambda x: x, make_drivers({"f": {"preset": "linear", "a": -0.5}}))
    sol, res = picard_solve(prob, batch, basis)
    assert res == [0.0]


def test_picard_contracts_and_is_unique_on_standard_model():
    chars, basis, batch = standard_batch(n_paths=4000, n_steps=20, seed=11)
    prob = standard_problem()
    cfg = SolverConfig(picard_tol=1e-8)
    sol0, res = picard_solve(prob, batch, basis, cfg)
    ratios = [res[k + 1] / res[k] for k in range(1, len(res) - 1) if res[k] > 0]
    assert ratios and max(ratios) <= 0.9
    sol1, _ = picard_solve(prob, batch, basis, cfg, init="obstacle")
    assert np.max(np.abs(sol0.Y - sol1.Y)) <= 5 * 1e-6
    assert np.all(sol0.Y >= np.asarray(sol0.obstacle) - 1e-8)
    assert np.all(sol0.dK >= 0)
    rep = equation_residuals(prob, sol0, batch)
    assert rep["within_3se"]


def test_comparison_with_shifted_terminal():
    chars, basis, batch = standard_batch(n_paths=2000, n_steps=10, seed=5)
    rep = compare_solutions(standard_problem(), standard_problem(1.0), batch, basis)
    assert rep["fraction_violating"] == 0.0
    assert rep["min_gap"] >= -rep["comparison_tol"]


@given(st.floats(-1.0, 1.0), st.floats(-2.0, 2.0))
def test_deterministic_linear_gap(a, c):
    basis, batch = _batch(N=50, n=4, seed=0)
    drivers = make_drivers({"f": {"preset": "linear", "a": a}})
    y1 = solve_lipschitz(RGBDSDEProblem(c, drivers), batch, basis).Y0
    y2 = solve_lipschitz(RGBDSDEProblem(c + 1.0, drivers), batch, basis).Y0
    assert y2 - y1 == pytest.approx(np.exp(a), abs=0.05)
