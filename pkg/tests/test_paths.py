from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgbdsde.basis import build_basis
from rgbdsde.errors import ConfigurationError
from rgbdsde.models import poisson_chars, two_atom_chars
from rgbdsde.paths import (
    TimeGrid, backward_integral, forward_integral, h_increments, h_increments_array, simulate_batch,
)


def test_h_increment_without_jumps():
    chars = poisson_chars(2.0)
    basis = build_basis(chars)
    counts = np.zeros((1, 1, 1))
    comp = np.array([[2.0 * 0.01]])
    dH = h_increments_array(basis, chars.sizes, counts, comp, None)
    assert dH[0, 0, 0] == pytest.approx(-2 * 0.01 / np.sqrt(2))


def test_h_increments_single_path_accessor():
    chars = two_atom_chars()
    basis = build_basis(chars)
    batch = simulate_batch(chars, basis, TimeGrid.uniform(0, 1, 10), 5, seed=1)
    assert np.allclose(h_increments(basis, chars, batch, 3, 4), batch.dH[3, 4])
    with pytest.raises(ConfigurationError):
        h_increments(basis, chars, batch, 0, 10)


def test_simulation_is_deterministic_in_the_seed():
    chars = two_atom_chars()
    basis = build_basis(chars)
    grid = TimeGrid.uniform(0, 1, 20)
    a = simulate_batch(chars, basis, grid, 300, seed=5)
    b = simulate_batch(chars, basis, grid, 300, seed=5)
    c = simulate_batch(chars, basis, grid, 300, seed=6)
    assert np.array_equal(a.L, b.L) and np.array_equal(a.dB, b.dB)
    assert not np.array_equal(a.L, c.L)


def test_common_backward_path_is_shared():
    chars = two_atom_chars()
    basis = build_basis(chars)
    batch = simulate_batch(chars, basis, TimeGrid.uniform(0, 1, 8), 50, seed=2, backward="common")
    assert batch.dB.shape == (1, 8)
    assert batch.dB_full().shape == (50, 8)
    injected = np.full((1, 8), 0.1)
    inj = simulate_batch(chars, basis, TimeGrid.uniform(0, 1, 8), 50, seed=2, backward="common",
                         backward_increments=injected)
    assert np.array_equal(inj.dB, injected)


def test_poisson_counts_have_poisson_mean():
    chars = poisson_chars(2.0)
    basis = build_basis(chars)
    batch = simulate_batch(chars, basis, TimeGrid.uniform(0, 1, 10), 20000, seed=3)
    total = batch.jump_count()
    assert abs(total.mean() - 2.0) < 4 * np.sqrt(2.0 / 20000)
    assert np.allclose(batch.dH.sum(axis=1).mean(axis=0), 0.0, atol=4 / np.sqrt(20000))


def test_grid_validation_and_refine():
    with pytest.raises(ConfigurationError):
        TimeGrid(0.0, 1.0, np.array([0.0, 0.5, 0.4, 1.0]))
    g = TimeGrid.uniform(0.0, 1.0, 4).refine()
    assert g.n_steps == 8 and g.nodes[1] == pytest.approx(0.125)


@given(st.integers(1, 6), st.integers(0, 5))
def test_integrals_are_sums(N, start):
    start = min(start, N - 1)
    rng = np.random.default_rng(N)
    dB = rng.normal(size=(3, N))
    G = rng.normal(size=(3, N - start))
    assert np.allclose(backward_integral(dB, G, start), (dB[:, start:] * G).sum(axis=1))
    dH = rng.normal(size=(3, N, 2))
    Z = rng.normal(size=(3, N - start, 2))
    assert np.allclose(forward_integral(dH, Z, start), (dH[:, start:] * Z).sum(axis=(1, 2)))
