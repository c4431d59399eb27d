"""
Closed-form Gibbs objects of stationary Markov chains.

State labels run over {0, ..., d-1}; for binary chains r = P₀₀ and s = P₁₁.
These values are the exact oracle for the transfer-operator engine.
"""

import logging

import numpy as np
from scipy import linalg

from .errors import AlphabetError, ConvergenceError, DepthError, UnsupportedError
from .models.schema import MarkovGibbs, Potential, StochasticMatrix
from .symbolic import CylinderFunction, CylinderMeasure, check_depth

logger = logging.getLogger(__name__)

# Allowed gap between the π-weighted and transposed binary Jacobians
TRANSPOSE_TOL = 1e-13


def as_matrix(P: StochasticMatrix | np.ndarray) -> StochasticMatrix:
    return P if isinstance(P, StochasticMatrix) else StochasticMatrix(P)


def stationary_vector(P: StochasticMatrix | np.ndarray) -> np.ndarray:
    """
    Left probability eigenvector π of P.

    Args:
        P (StochasticMatrix | np.ndarray): Positive stochastic matrix

    Returns:
        np.ndarray: π with πP = π and Σπ = 1
    """
    P = as_matrix(P)
    if P.size == 2:
        # Two-state balance: π₀(1 - r) = π₁(1 - s)
        r, s = P.r, P.s
        return np.array([1.0 - s, 1.0 - r]) / (2.0 - r - s)
    system = P.matrix.T - np.eye(P.size)
    system[-1, :] = 1.0
    rhs = np.zeros(P.size)
    rhs[-1] = 1.0
    return linalg.solve(system, rhs)


def jacobian_potential(P: StochasticMatrix | np.ndarray) -> Potential:
    """
    Depth-2 log-Jacobian log(π_{x₁}P_{x₁x₂}/π_{x₂}) of the stationary chain.

    For binary chains the value on [i, j] must equal log P_{j,i}; the
    construction checks this.

    Args:
        P (StochasticMatrix | np.ndarray): Positive stochastic matrix

    Returns:
        Potential: Normalized potential of depth 2
    """
    P = as_matrix(P)
    pi = stationary_vector(P)
    d = P.size
    J = pi[:, None] * P.matrix / pi[None, :]
    if d == 2:
        gap = float(np.max(np.abs(J - P.matrix.T)))
        if gap > TRANSPOSE_TOL:
            logger.warning(
                "binary Jacobian differs from the transposed matrix by %.3e", gap
            )
            raise ConvergenceError(
                f"binary Jacobian differs from P transposed by {gap:.3e}"
            )
    return Potential(CylinderFunction(d, 2, np.log(J).ravel()), "normalized")


def markov_gibbs(P: StochasticMatrix | np.ndarray) -> MarkovGibbs:
    P = as_matrix(P)
    return MarkovGibbs(P, stationary_vector(P), jacobian_potential(P))


def cylinder_measure(P: StochasticMatrix | np.ndarray, depth: int) -> CylinderMeasure:
    """
    μ[x₁...x_n] = π_{x₁}P_{x₁x₂}...P_{x_{n-1}x_n}.

    Args:
        P (StochasticMatrix | np.ndarray): Positive stochastic matrix
        depth (int): Cylinder length n >= 1

    Returns:
        CylinderMeasure: Stationary Markov measure at depth n
    """
    P = as_matrix(P)
    d = P.size
    if depth < 1:
        raise DepthError("a Markov cylinder measure needs depth >= 1")
    check_depth(d, depth)
    weights = stationary_vector(P)
    for _ in range(depth - 1):
        last = np.arange(weights.size) % d
        weights = (weights[:, None] * P.matrix[last]).ravel()
    return CylinderMeasure(d, depth, weights / weights.sum())


def markov_entropy(P: StochasticMatrix | np.ndarray) -> float:
    """-Σ π_r P_rs log P_rs."""
    P = as_matrix(P)
    pi = stationary_vector(P)
    return float(-np.sum(pi[:, None] * P.matrix * np.log(P.matrix)))


def transposed_entropy(P: StochasticMatrix | np.ndarray) -> float:
    """-Σ π_r P_rs log P_sr, equal to the entropy for binary chains only."""
    P = as_matrix(P)
    if P.size != 2:
        raise UnsupportedError("the transposed entropy identity is binary only")
    pi = stationary_vector(P)
    return float(-np.sum(pi[:, None] * P.matrix * np.log(P.matrix.T)))


def markov_kl(
    P0: StochasticMatrix | np.ndarray, P1: StochasticMatrix | np.ndarray
) -> float:
    """
    Relative entropy rate Σ_x μ₀[x₁x₂](log J₀ - log J₁).

    Args:
        P0 (StochasticMatrix | np.ndarray): Chain of the reference measure
        P1 (StochasticMatrix | np.ndarray): Chain of the compared measure

    Returns:
        float: D_KL(μ₀|μ₁) >= 0
    """
    P0, P1 = as_matrix(P0), as_matrix(P1)
    if P0.size != P1.size:
        raise AlphabetError(f"chain sizes differ: {P0.size} vs {P1.size}")
    if np.array_equal(P0.matrix, P1.matrix):
        return 0.0
    mu0 = cylinder_measure(P0, 2)
    gap = jacobian_potential(P0).values - jacobian_potential(P1).values
    return float(np.dot(mu0.weights, gap))


def markov_coordinates(J: Potential | CylinderFunction) -> tuple[float, float]:
    """
    Read (r, s) back from a binary Jacobian of depth at most 2.

    Args:
        J (Potential | CylinderFunction): Binary log-Jacobian

    Returns:
        tuple[float, float]: (J on [0,0], J on [1,1])
    """
    f = J.function if isinstance(J, Potential) else J
    if f.alphabet_size != 2:
        raise UnsupportedError("Markov coordinates are defined for binary chains")
    blocks = np.exp(f.refine(max(f.depth, 2)).values).reshape(4, -1)
    if np.max(np.ptp(blocks, axis=1)) > 1e-10:
        raise DepthError("Jacobian depends on more than two symbols")
    values = blocks[:, 0]
    return float(values[0]), float(values[3])

