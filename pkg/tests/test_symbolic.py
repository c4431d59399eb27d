"""
Tests for words, cylinder functions and cylinder measures.
Run with: pytest tests/test_symbolic.py
"""

import numpy as np
import pytest

from app.errors import AlphabetError, DepthCapError, DepthError, MeasureError
from app.symbolic import (
    CylinderFunction,
    CylinderMeasure,
    Word,
    all_words,
    compose_branch,
    compose_shift,
    decode,
    digits,
    index,
    integrate,
    mirror_apply,
    refine,
    sum_preimages,
)


def test_index_examples():
    """Test the lexicographic index of a few binary words."""
    assert index(Word((0, 0, 0))) == 0
    assert index(Word((1, 1, 1))) == 7
    assert index(Word((0, 1, 1))) == 3
    assert index(Word((2, 1), alphabet_size=3)) == 7


def test_index_decode_bijection():
    """Test that decode inverts index on every word up to length 10."""
    for k in range(11):
        indices = [index(w) for w in all_words(k)]
        assert indices == list(range(2**k))
    words = all_words(10)
    assert all(decode(index(w), 10) == w for w in words)


def test_word_rejects_bad_symbol():
    """Test that symbols outside the alphabet are rejected."""
    with pytest.raises(AlphabetError):
        Word((0, 2))
    with pytest.raises(AlphabetError):
        Word((0,), alphabet_size=1)


def test_digits_table_matches_decode():
    """Test that the digits table lists words in index order."""
    table = digits(4, 3)
    for i in (0, 5, 40, 80):
        assert tuple(table[i]) == decode(i, 4, 3).symbols


def test_refine_examples():
    """Test exact lifts to deeper cylinder levels."""
    one = CylinderFunction.constant(1.0)
    np.testing.assert_array_equal(refine(one, 3).values, np.ones(8))

    f = CylinderFunction(2, 1, [2.0, 5.0])
    np.testing.assert_array_equal(f.refine(2).values, [2.0, 2.0, 5.0, 5.0])
    np.testing.assert_array_equal(f.refine(2).refine(4).values, f.refine(4).values)

    with pytest.raises(DepthError):
        f.refine(4).refine(2)


def test_refine_preserves_evaluation():
    """Test that a refined function evaluates identically on every word."""
    rng = np.random.default_rng(0)
    f = CylinderFunction(3, 2, rng.normal(size=9))
    g = f.refine(4)
    for w in all_words(4, 3):
        assert g(w) == f(w)


def test_compose_shift_examples():
    """Test f∘σ on constants and depth-one functions."""
    c = CylinderFunction.constant(4.0)
    np.testing.assert_array_equal(compose_shift(c).values, [4.0, 4.0])

    f = CylinderFunction(2, 1, [2.0, 5.0])
    g = compose_shift(f)
    assert g.depth == 2
    np.testing.assert_array_equal(g.values, [2.0, 5.0, 2.0, 5.0])
    assert g((1, 0)) == f((0,))


def test_compose_shift_respects_depth_cap(monkeypatch):
    """Test that shifting past the depth cap fails loudly."""
    monkeypatch.setattr("app.config.DEPTH_CAP", 3)
    f = CylinderFunction(2, 3, np.arange(8.0))
    with pytest.raises(DepthCapError):
        compose_shift(f)


def test_branch_and_preimage_sums():
    """Test f∘τ_a and Σ_a f(a·x) against direct evaluation."""
    rng = np.random.default_rng(1)
    f = CylinderFunction(2, 3, rng.normal(size=8))
    g = compose_branch(f, 1)
    s = sum_preimages(f)
    for w in all_words(2):
        assert g(w) == f(w.prepend(1))
        assert s(w) == pytest.approx(f(w.prepend(0)) + f(w.prepend(1)))


def test_mirror_apply():
    """Test the mirror pull-back on [0]-carried data."""
    ind = CylinderFunction.indicator(Word((0, 0)))
    np.testing.assert_array_equal(mirror_apply(ind).values, [0.0, 0.0, 1.0, 0.0])

    rng = np.random.default_rng(2)
    f = CylinderFunction(2, 3, rng.normal(size=8)).restrict(0)
    np.testing.assert_array_equal(mirror_apply(mirror_apply(f)).values, f.values)

    with pytest.raises(AlphabetError):
        mirror_apply(CylinderFunction(3, 1, [1.0, 2.0, 3.0]))


def test_arithmetic_reconciles_depth():
    """Test that mixed-depth arithmetic lifts to the deeper operand."""
    f = CylinderFunction(2, 1, [1.0, 2.0])
    g = CylinderFunction(2, 2, [1.0, 1.0, 3.0, 3.0])
    h = f * g + 1.0
    assert h.depth == 2
    np.testing.assert_array_equal(h.values, [2.0, 2.0, 7.0, 7.0])
    with pytest.raises(AlphabetError):
        f + CylinderFunction(3, 1, [0.0, 0.0, 0.0])


def test_values_are_read_only():
    """Test that stored values cannot be mutated."""
    f = CylinderFunction(2, 1, [1.0, 2.0])
    with pytest.raises(ValueError):
        f.values[0] = 3.0


def test_integrate_examples():
    """Test integrals of constants and indicators."""
    rng = np.random.default_rng(3)
    mu = CylinderMeasure.from_weights(rng.random(16))
    assert integrate(CylinderFunction.constant(1.0), mu) == pytest.approx(1.0)
    x = Word((1, 0, 1))
    assert integrate(CylinderFunction.indicator(x), mu) == pytest.approx(mu.mass(x))


def test_integrate_refinement_invariance():
    """Test that refining the integrand leaves the integral unchanged."""
    rng = np.random.default_rng(4)
    mu = CylinderMeasure.from_weights(rng.random(32))
    f = CylinderFunction(2, 2, rng.normal(size=4))
    assert integrate(f.refine(5), mu) == integrate(f, mu)


def test_integrate_depth_and_alphabet_errors():
    """Test that integration refuses incompatible inputs."""
    mu = CylinderMeasure.uniform(2, 2)
    with pytest.raises(DepthError):
        integrate(CylinderFunction.constant(0.0, 2, 3), mu)
    with pytest.raises(AlphabetError):
        integrate(CylinderFunction.constant(0.0, 3, 1), mu)


def test_measure_validation():
    """Test that improper weights are rejected."""
    with pytest.raises(MeasureError):
        CylinderMeasure(2, 1, [0.7, 0.7])
    with pytest.raises(MeasureError):
        CylinderMeasure(2, 1, [1.5, -0.5])


def test_measure_refinement_consistency():
    """Test coarsening and the refinement defect."""
    rng = np.random.default_rng(5)
    fine = CylinderMeasure.from_weights(rng.random(64))
    coarse = fine.coarsen(3)
    assert fine.refinement_defect(coarse) <= 1e-12
    for w in all_words(3):
        assert coarse.mass(w) == pytest.approx(fine.mass(w), abs=1e-15)
    assert fine.mass(Word(())) == pytest.approx(1.0)
