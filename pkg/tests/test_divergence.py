"""
Tests for relative entropy, family derivatives, defects and projections.
Run with: pytest tests/test_divergence.py
"""

import numpy as np
import pytest

from app.divergence import (
    bernoulli_identity,
    bregman,
    defects,
    derivative_at,
    derivative_entry,
    divergence_along,
    fd_oracle,
    fisher_expansion_ratio,
    j_family_member,
    kl,
    logj_family_member,
    project_onto_simplex,
    project_simplex,
)
from app.errors import ConfigError, NotNormalizedError, UnsupportedError
from app.markov import jacobian_potential, markov_kl
from app.models.schema import (
    JFamily,
    LogJFamily,
    Potential,
    SimplexProblem,
    StochasticMatrix,
)
from app.symbolic import CylinderFunction
from app.transfer import leading_eigendata
from tests.conftest import random_chain, random_jacobian

BERNOULLI_GRID = np.linspace(0.1, 0.9, 5)


def chain_jacobian(r: float, s: float) -> Potential:
    return jacobian_potential(StochasticMatrix.from_rs(r, s))


def test_kl_examples(mama, mama_jacobians):
    """Test D(μ, μ) = 0 and agreement with the Markov entropy rate formula."""
    J0, J1, J2 = mama_jacobians
    assert kl(J0, J0) == 0.0
    assert kl(J0, J1) == pytest.approx(markov_kl(mama[0], mama[1]), abs=1e-14)
    assert kl(J2, J1) == pytest.approx(markov_kl(mama[2], mama[1]), abs=1e-14)
    assert kl(leading_eigendata(J0), J1) == pytest.approx(kl(J0, J1), abs=1e-15)


def test_kl_rejects_raw_potential(rng):
    """Test that an unnormalized potential is refused."""
    raw = CylinderFunction(2, 2, rng.normal(size=4))
    with pytest.raises(NotNormalizedError):
        kl(raw, chain_jacobian(0.3, 0.4))


def test_mama_defect(mama_jacobians):
    """Test the type-1 defect of the worked Markov triple."""
    report = defects(*mama_jacobians, oracle=False)
    assert report.type1_pythagorean.integral == pytest.approx(-0.3578, abs=5e-4)
    assert report.type1_pythagorean.pairwise == pytest.approx(
        report.type1_pythagorean.integral, abs=1e-12
    )
    assert report.type1_triangle == pytest.approx(-report.type1_pythagorean.pairwise)


def test_mama_second_derivative(mama_jacobians):
    """Test the second-problem J-family derivative at 0 against its oracle."""
    J0, J1, J2 = mama_jacobians
    entry = derivative_entry(
        JFamily(J0, J2), "second", 0, J1, references=(0.362455, 0.2750)
    )
    assert entry.matches_oracle
    assert entry.value == pytest.approx(entry.oracle, rel=1e-6)
    assert entry.value == pytest.approx(-0.097353, abs=1e-5)
    assert entry.formula == pytest.approx(0.2750, abs=2e-3)
    assert entry.formula_reference_match == 0.2750
    assert entry.reference_match is None
    assert not entry.formula_matches_oracle


def test_mama_regimes(mama_jacobians):
    """Test that the frozen-measure formula and the full derivative disagree in sign."""
    report = defects(*mama_jacobians, oracle=False)
    assert report.formula_regime == "second-law"
    assert report.regime == "fluctuation"
    assert report.type1_pythagorean.pairwise < 0.0


def test_derivatives_match_oracle(mama_jacobians, rng):
    """Test every supported derivative against the Richardson oracle."""
    triples = [mama_jacobians, tuple(random_jacobian(rng, 3) for _ in range(3))]
    for J0, J1, J2 in triples:
        report = defects(J0, J1, J2)
        assert len(report.derivatives) == 6
        for entry in report.derivatives:
            assert entry.matches_oracle, entry


@pytest.mark.slow
def test_random_triples_match_oracle_at_depth_6(rng):
    """Test all six derivatives of 50 seeded random binary triples at depth 6."""
    for _ in range(50):
        J0, J1, J2 = (random_jacobian(rng, 3) for _ in range(3))
        report = defects(J0, J1, J2, depth=6)
        assert len(report.derivatives) == 6
        for entry in report.derivatives:
            assert entry.matches_oracle, entry


def test_first_problem_formula_equals_full(mama_jacobians):
    """Test that the first problem has a single closed form."""
    J0, J1, J2 = mama_jacobians
    for family in (JFamily(J0, J2), LogJFamily(J0, J2)):
        full = derivative_at(family, "first", 0, J1)
        assert derivative_at(family, "first", 0, J1, response="formula") == full


def test_logj_family_endpoint_one_is_unsupported(mama_jacobians):
    """Test that the log-J family refuses λ = 1."""
    J0, J1, J2 = mama_jacobians
    for problem in ("first", "second"):
        with pytest.raises(UnsupportedError):
            derivative_at(LogJFamily(J0, J2), problem, 1, J1)
    with pytest.raises(ConfigError):
        derivative_at(JFamily(J0, J2), "first", 2, J1)


def test_family_members(mama_jacobians):
    """Test the endpoints and normalization of both families."""
    J0, _, J2 = mama_jacobians
    assert j_family_member(JFamily(J0, J2), 0.0) is J0
    assert j_family_member(JFamily(J0, J2), 1.0) is J2
    middle = j_family_member(JFamily(J0, J2), 0.5)
    np.testing.assert_allclose(
        np.exp(middle.values), 0.5 * (np.exp(J0.values) + np.exp(J2.values))
    )
    assert logj_family_member(LogJFamily(J0, J2), 0.3).is_normalized


def test_degenerate_family_has_zero_derivative(mama_jacobians):
    """Test J₀ = J₂ gives an identically zero divergence slope."""
    J0, J1, _ = mama_jacobians
    assert derivative_at(JFamily(J0, J0), "second", 0, J1) == 0.0
    assert divergence_along(JFamily(J0, J0), "first", J1, 0.7) == pytest.approx(
        kl(J1, J0), abs=1e-14
    )


def test_fd_oracle_polynomial():
    """Test the oracle on a polynomial with a known derivative."""
    assert fd_oracle(lambda x: x**4 - 2.0 * x**2 + x, at=0.5) == pytest.approx(
        4 * 0.125 - 2.0 + 1.0, abs=1e-10
    )


def test_random_triples(rng):
    """Test defect identities and the elementary bound on random triples."""
    for _ in range(50):
        J0, J1, J2 = (jacobian_potential(random_chain(rng)) for _ in range(3))
        report = defects(J0, J1, J2, oracle=False)
        assert all(v >= 0.0 for v in report.divergences.values())
        for pair in (report.type1_pythagorean, report.type2_pythagorean):
            assert pair.pairwise == pytest.approx(pair.integral, abs=1e-12)
        assert report.log_ratio_bound.holds
        assert isinstance(report.pythagorean_chain.holds, bool)
        assert isinstance(report.frozen_measure_bound.holds, bool)
        assert report.regime in ("second-law", "fluctuation", "stationary")


def test_pythagorean_chain_fails_when_target_is_base(mama_jacobians):
    """Test μ₁ = μ₀: the premise holds but the conclusion does not."""
    J0, _, J2 = mama_jacobians
    report = defects(J0, J0, J2, oracle=False)
    assert report.pythagorean_chain.premise
    assert not report.pythagorean_chain.holds
    assert report.regime == "stationary"


def test_bernoulli_identity():
    """Test derivative, type-1 defect and closed form on a Bernoulli grid."""
    for p0 in BERNOULLI_GRID:
        for p1 in BERNOULLI_GRID:
            for p2 in BERNOULLI_GRID:
                derivative, defect, closed = bernoulli_identity(p0, p1, p2)
                assert derivative == pytest.approx(closed, abs=1e-12)
                assert defect == pytest.approx(closed, abs=1e-12)


def test_bernoulli_convexity():
    """Test that the second-problem J-family slope increases from 0 to 1."""
    bern = [
        jacobian_potential(StochasticMatrix.bernoulli([p, 1.0 - p]))
        for p in (0.2, 0.6, 0.85)
    ]
    assert defects(*bern, oracle=False).convexity.holds


def test_bregman(mama_jacobians):
    """Test the pressure generator, its slopes and Legendre transform."""
    J0, _, J2 = mama_jacobians
    result = bregman(J0, J2)
    np.testing.assert_allclose(result.endpoint_values, 0.0, atol=1e-12)
    assert result.divergence == pytest.approx(kl(J0, J2), abs=1e-12)
    assert result.slope_at_one == pytest.approx(kl(J2, J0), abs=1e-12)
    assert result.slope_oracle == pytest.approx(result.slope_at_zero, rel=1e-6)
    assert result.generator(0.5) < 0.0
    assert result.legendre(result.slope_at_zero) == pytest.approx(0.0, abs=1e-9)
    assert result.legendre(0.0) >= -1e-12
    top = result.slope_at_one
    assert result.legendre(top) == pytest.approx(top, abs=1e-9)
    eta = fd_oracle(result.generator, 0.5)
    inner = 0.5 * eta - result.generator(0.5)
    assert result.legendre(eta) == pytest.approx(inner, abs=1e-8)


def test_bregman_identical_endpoints(mama_jacobians):
    """Test that a flat generator has Legendre transform max(η, 0)."""
    J0 = mama_jacobians[0]
    result = bregman(J0, J0)
    for eta in (-0.5, -1e-3, 0.0, 0.3, 0.7):
        assert result.legendre(eta) == pytest.approx(max(eta, 0.0), abs=1e-9)


def test_fisher_expansion_ratio(rng):
    """Test D(μ₀|μ^λ) ≈ ½λ²‖ξ̂‖² along the log-J family."""
    for _ in range(10):
        J0, J2 = (jacobian_potential(random_chain(rng)) for _ in range(2))
        assert 0.99 <= fisher_expansion_ratio(J0, J2, lam=1e-2) <= 1.01


def test_project_onto_simplex():
    """Test the sort-based Euclidean projection."""
    np.testing.assert_allclose(
        project_onto_simplex(np.array([0.2, 0.3, 0.5])), [0.2, 0.3, 0.5]
    )
    np.testing.assert_allclose(project_onto_simplex(np.array([2.0, 0.0])), [1.0, 0.0])
    np.testing.assert_allclose(project_onto_simplex(np.array([1.0, 1.0])), [0.5, 0.5])


def test_simplex_problem_validation(mama_jacobians):
    """Test rejection of coincident or too few vertices."""
    J0, J1, _ = mama_jacobians
    with pytest.raises(ConfigError):
        SimplexProblem((J0,), J1)
    with pytest.raises(ConfigError):
        SimplexProblem((J0, J0), J1)


def test_projection_target_is_vertex(mama_jacobians):
    """Test that a vertex target projects to itself with value 0."""
    J0, J1, J2 = mama_jacobians
    result = project_simplex(SimplexProblem((J0, J1, J2), J1))
    np.testing.assert_allclose(result.weights, [0.0, 1.0, 0.0], atol=1e-8)
    assert result.value == pytest.approx(0.0, abs=1e-14)
    assert result.certificate.passed
    assert result.starts == 4
    assert len(result.vertex_inequalities) == 3


def test_projection_recovers_interior_mixture():
    """Test that a target inside the J-hull is recovered by its weights."""
    vertices = tuple(chain_jacobian(*rs) for rs in ((0.2, 0.3), (0.7, 0.6), (0.4, 0.9)))
    weights = np.array([0.2, 0.5, 0.3])
    mixed = sum(w * v.function.exp() for w, v in zip(weights, vertices))
    target = Potential(mixed.log(), "normalized")
    result = project_simplex(SimplexProblem(vertices, target), max_workers=2)
    np.testing.assert_allclose(result.weights, weights, atol=1e-5)
    assert result.value == pytest.approx(0.0, abs=1e-10)
    assert result.certificate.passed


def test_projection_two_vertices_matches_grid():
    """Test a two-vertex projection against a dense parameter grid."""
    V0, V1 = chain_jacobian(0.2, 0.8), chain_jacobian(0.85, 0.3)
    target = chain_jacobian(0.5, 0.45)
    family = JFamily(V1, V0)
    grid = np.linspace(0.0, 1.0, 2001)
    values = [divergence_along(family, "first", target, t) for t in grid]
    best = int(np.argmin(values))
    result = project_simplex(SimplexProblem((V0, V1), target))
    assert result.weights[0] == pytest.approx(grid[best], abs=1e-3)
    assert result.value <= values[best] + 1e-12
    assert result.certificate.passed


def test_projection_max_mode_picks_vertex(mama_jacobians):
    """Test that the maximum of a convex objective sits on a vertex."""
    corners = ((0.2, 0.8), (0.85, 0.3), (0.5, 0.5))
    vertices = tuple(chain_jacobian(*rs) for rs in corners)
    result = project_simplex(
        SimplexProblem(vertices, mama_jacobians[1], mode="max")
    )
    assert result.value == pytest.approx(max(result.vertex_values), abs=1e-12)
    assert result.certificate.on_boundary
    assert result.certificate.passed


def test_projection_logj_second_slot(mama_jacobians):
    """Test the log-J family in the second slot against its vertex values."""
    corners = ((0.2, 0.8), (0.85, 0.3), (0.4, 0.4))
    vertices = tuple(chain_jacobian(*rs) for rs in corners)
    result = project_simplex(
        SimplexProblem(vertices, mama_jacobians[1], slot="second", family="logJ")
    )
    assert result.value <= min(result.vertex_values) + 1e-12
    assert result.certificate.passed
    assert result.vertex_inequalities == ()
