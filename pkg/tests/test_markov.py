"""
Tests for the closed-form Markov chain objects.
Run with: pytest tests/test_markov.py
"""

import numpy as np
import pytest

from app.errors import AlphabetError, ConfigError, DepthError, UnsupportedError
from app.markov import (
    cylinder_measure,
    jacobian_potential,
    markov_coordinates,
    markov_entropy,
    markov_gibbs,
    markov_kl,
    stationary_vector,
    transposed_entropy,
)
from app.models.schema import StochasticMatrix
from app.symbolic import CylinderFunction
from app.transfer import entropy, gibbs_measure, normalization_residual
from tests.conftest import random_chain

GRID = np.linspace(0.1, 0.9, 5)


def test_stochastic_matrix_validation():
    """Test rejection of non-square, non-positive and non-stochastic input."""
    with pytest.raises(ConfigError):
        StochasticMatrix([[0.5, 0.5]])
    with pytest.raises(ConfigError):
        StochasticMatrix([[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(ConfigError):
        StochasticMatrix([[0.6, 0.5], [0.5, 0.5]])
    P = StochasticMatrix.from_rs(0.3, 0.8)
    assert (P.r, P.s) == (0.3, 0.8)
    np.testing.assert_allclose(P.matrix, [[0.3, 0.7], [0.2, 0.8]])


def test_stationary_vector(rng):
    """Test πP = π for binary and larger chains."""
    for d in (2, 3, 4):
        P = random_chain(rng, d)
        pi = stationary_vector(P)
        np.testing.assert_allclose(pi @ P.matrix, pi, atol=1e-14)
        assert pi.sum() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(
        stationary_vector(StochasticMatrix.from_rs(0.5, 0.5)), [0.5, 0.5]
    )


def test_binary_jacobian_is_transpose():
    """Test π_i P_ij / π_j = P_ji on a grid of binary chains."""
    for r in GRID:
        for s in GRID:
            P = StochasticMatrix.from_rs(r, s)
            J = np.exp(jacobian_potential(P).values).reshape(2, 2)
            np.testing.assert_allclose(J, P.matrix.T, atol=1e-13)


def test_jacobian_is_normalized(rng):
    """Test ℒ1 = 1 for the Jacobian of a 3-state chain."""
    J = jacobian_potential(random_chain(rng, 3))
    assert J.is_normalized
    assert J.depth == 2
    assert normalization_residual(J) <= 1e-14


def test_cylinder_measure_matches_transfer(rng):
    """Test the Markov cylinder weights against the transfer-operator Gibbs measure."""
    for d in (2, 3):
        P = random_chain(rng, d)
        for depth in (1, 3, 5):
            np.testing.assert_allclose(
                cylinder_measure(P, depth).weights,
                gibbs_measure(jacobian_potential(P), depth).weights,
                atol=1e-13,
            )
    with pytest.raises(DepthError):
        cylinder_measure(StochasticMatrix.from_rs(0.3, 0.4), 0)


def test_entropy_forms(rng):
    """Test the entropy against the transfer engine and the transposed form."""
    for _ in range(5):
        P = random_chain(rng)
        h = markov_entropy(P)
        assert h == pytest.approx(entropy(jacobian_potential(P)), abs=1e-13)
        assert h == pytest.approx(transposed_entropy(P), abs=1e-13)
    uniform = StochasticMatrix.from_rs(0.5, 0.5)
    assert markov_entropy(uniform) == pytest.approx(np.log(2.0))
    with pytest.raises(UnsupportedError):
        transposed_entropy(random_chain(rng, 3))


def test_markov_kl(mama):
    """Test the entropy rate divergence: zero on the diagonal, positive off it."""
    P0, P1, _ = mama
    assert markov_kl(P0, P0) == 0.0
    assert markov_kl(P0, P1) > 0.0
    with pytest.raises(AlphabetError):
        markov_kl(P0, StochasticMatrix(np.full((3, 3), 1.0 / 3.0)))


def test_markov_coordinates_round_trip():
    """Test reading (r, s) back from a Jacobian."""
    for r in GRID:
        for s in GRID:
            got = markov_coordinates(jacobian_potential(StochasticMatrix.from_rs(r, s)))
            np.testing.assert_allclose(got, (r, s), atol=1e-13)


def test_markov_coordinates_rejects_deep_jacobian():
    """Test that a depth-3 dependence is refused."""
    f = CylinderFunction(2, 3, np.log([0.3, 0.4, 0.7, 0.6, 0.5, 0.5, 0.5, 0.5]))
    with pytest.raises(DepthError):
        markov_coordinates(f)


def test_markov_gibbs_bundle():
    """Test the bundled chain, stationary vector and Jacobian."""
    G = markov_gibbs([[0.2, 0.8], [0.8, 0.2]])
    np.testing.assert_allclose(G.stationary, [0.5, 0.5])
    np.testing.assert_allclose(np.exp(G.log_j.values), [0.2, 0.8, 0.8, 0.2])
