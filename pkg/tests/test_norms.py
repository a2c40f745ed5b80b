from __future__ import annotations

import numpy as np
import pytest

from rgbdsde.basis import build_basis
from rgbdsde.bdsde import SolutionGrid
from rgbdsde.errors import ConfigurationError
from rgbdsde.models import two_atom_chars
from rgbdsde.norms import apriori_check, build_weights, ito_remainder, theta_admissible, weighted_norms
from rgbdsde.paths import TimeGrid, simulate_batch
from rgbdsde.verify import standard_batch, standard_problem
from rgbdsde.bdsde import picard_solve


def _constant_solution(value, nodes, n=3, d=2):
    N = nodes.size - 1
    Y = np.full((n, N + 1), value)
    zeros = np.zeros((n, N + 1))
    return SolutionGrid(Y=Y, Z=np.zeros((n, N, d)), K=zeros, dK=np.zeros((n, N)), kappa=zeros, state=zeros,
                        obstacle=None, bracket=np.ones((N, d)) * np.diff(nodes)[:, None], nodes=nodes,
                        Y0=value, Y0_se=0.0)


def test_zero_solution_has_zero_norms():
    nodes = np.linspace(0, 1, 11)
    w = build_weights(nodes, np.zeros((1, 11)), 1.0, 1.0, 1.0)
    rep = weighted_norms(_constant_solution(0.0, nodes), w)
    assert all(v == 0 for v in rep.values() if isinstance(v, float))


def test_unit_solution_s2_norm_closed_form():
    nodes = np.linspace(0, 1, 11)
    w = build_weights(nodes, np.zeros((1, 11)), 2.0, 1.0, 1.0)
    rep = weighted_norms(_constant_solution(1.0, nodes), w)
    assert rep["S2"] == pytest.approx(np.exp(2.0))


def test_weight_validation():
    nodes = np.linspace(0, 1, 5)
    with pytest.raises(ConfigurationError):
        build_weights(nodes, np.zeros((1, 5)), 0.0, 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        build_weights(nodes, np.zeros((1, 5)), 1.0, -1.0, 1.0)


def test_theta_admissibility_and_rejection():
    assert not theta_admissible(4.0, 0.1)
    assert theta_admissible(8.0, 0.1)
    chars, basis, batch = standard_batch(n_paths=500, n_steps=10, seed=1)
    prob = standard_problem()
    sol, _ = picard_solve(prob, batch, basis)
    w = build_weights(batch.grid.nodes, sol.kappa, 1.0, 4.0, 1.0)
    with pytest.raises(ConfigurationError):
        apriori_check(prob, sol, w, batch, alpha=0.1)
    ok = apriori_check(prob, sol, build_weights(batch.grid.nodes, sol.kappa, 1.0, 8.0, 1.0), batch, alpha=0.1)
    assert np.isfinite(ok["ratio"])


def test_ito_remainder_first_order():
    chars = two_atom_chars()
    basis = build_basis(chars)
    means = []
    for N in (50, 100):
        batch = simulate_batch(chars, basis, TimeGrid.uniform(0, 1, N), 20000, seed=4, backward="independent")
        means.append(abs(ito_remainder(batch).mean()))
    assert means[0] / means[1] >= 1.8
