from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rgbdsde.basis import (
    build_basis, check_diagonal_bracket, gamma, gamma_sq_integral, instantaneous_gram, orthonormality_error,
    project_on_basis,
)
from rgbdsde.errors import ConfigurationError
from rgbdsde.levy import JumpAtom, LevyCharacteristics
from rgbdsde.models import modulated_chars, poisson_chars, two_atom_chars


def test_poisson_basis_is_scaled_constant():
    basis = build_basis(poisson_chars(2.0))
    assert basis.d == 1
    assert basis.alpha[0, 0] == pytest.approx(1 / np.sqrt(2))
    assert float(basis.p(1, 1.0)) == pytest.approx(1 / np.sqrt(2))


def test_brownian_only_basis():
    basis = build_basis(LevyCharacteristics(1.0, 0.0, 4.0))
    assert basis.d == 1
    assert basis.alpha[0, 0] == pytest.approx(0.5)


def test_two_atom_basis_orthonormal_and_triangular():
    basis = build_basis(two_atom_chars())
    assert basis.d == 2
    assert orthonormality_error(basis) < 1e-12
    assert np.all(np.triu(basis.alpha, 1) == 0)
    assert np.all(np.diag(basis.alpha) > 0)


def test_bracket_diagonal_and_gamma_under_modulation():
    chars = modulated_chars()
    basis = build_basis(chars)
    ok, worst = check_diagonal_bracket(basis, chars, np.linspace(0, chars.T, 11))
    assert ok and worst < 1e-10
    for t in (0.1, 0.7):
        G = instantaneous_gram(basis, chars, t)
        for k in range(1, basis.d + 1):
            assert gamma(basis, k, t) ** 2 == pytest.approx(G[k - 1, k - 1], rel=1e-10)
    with pytest.raises(ConfigurationError):
        gamma(basis, basis.d + 1, 0.5)


def test_gamma_sq_integral_matches_quadrature():
    chars = modulated_chars()
    basis = build_basis(chars)
    ts = np.linspace(0.2, 0.9, 2001)
    for k in range(1, basis.d + 1):
        vals = np.array([gamma(basis, k, t) ** 2 for t in ts])
        trap = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts)))
        assert gamma_sq_integral(basis, 0.2, 0.9)[k - 1] == pytest.approx(trap, rel=1e-6)


def test_projection_of_basis_element_is_unit_vector():
    chars = two_atom_chars()
    basis = build_basis(chars)
    t = basis.t_ref
    lam = chars.intensities(t)
    # <p_1, p_i> in the jump measure at the reference time is delta_{1i}
    proj = project_on_basis(basis, chars, lambda s, e: float(basis.p(1, e)), t)
    assert proj == pytest.approx([1.0, 0.0], abs=1e-10)
    assert lam.shape == (2,)


@given(st.lists(st.floats(-2.0, 2.0).filter(lambda e: abs(e) > 0.05), min_size=1, max_size=4, unique=True),
       st.floats(0.2, 3.0))
def test_random_atoms_give_orthonormal_basis(sizes, lam):
    sizes = sorted(set(round(s, 3) for s in sizes))
    if len(sizes) < 1 or min(np.diff(sizes), default=1.0) < 0.05:
        return
    chars = LevyCharacteristics(1.0, 0.0, 0.0, [JumpAtom(e, lam) for e in sizes])
    basis = build_basis(chars)
    assert basis.d == len(sizes)
    assert orthonormality_error(basis) < 1e-8
