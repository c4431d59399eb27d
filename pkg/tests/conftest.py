import numpy as np
import pytest

from app.markov import jacobian_potential
from app.models.schema import Potential, StochasticMatrix
from app.symbolic import CylinderFunction
from app.transfer import normalize

MAMA = (
    StochasticMatrix([[0.2, 0.8], [0.8, 0.2]]),
    StochasticMatrix([[0.15, 0.85], [0.08, 0.92]]),
    StochasticMatrix([[0.9, 0.1], [0.88, 0.12]]),
)


def random_potential(rng, depth: int = 3, d: int = 2) -> Potential:
    return Potential(CylinderFunction(d, depth, rng.normal(size=d**depth)))


def random_jacobian(rng, depth: int = 3, d: int = 2) -> Potential:
    """Normalized potential of a random depth-limited Gibbs measure."""
    return normalize(random_potential(rng, depth, d))


def random_chain(rng, d: int = 2, low: float = 0.1) -> StochasticMatrix:
    rows = rng.uniform(low, 1.0, size=(d, d))
    return StochasticMatrix(rows / rows.sum(axis=1, keepdims=True))


@pytest.fixture
def mama():
    """The three binary chains (P₀, P₁, P₂) of the worked Markov example."""
    return MAMA


@pytest.fixture
def mama_jacobians():
    return tuple(jacobian_potential(P) for P in MAMA)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
