from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .. import config
from ..errors import ConfigError, DomainError, NotNormalizedError
from ..symbolic import CylinderFunction, CylinderMeasure, sum_preimages


def normalization_residual(function: CylinderFunction) -> float:
    """sup |ℒ_B 1 - 1| for the potential B stored in function."""
    return float(np.max(np.abs(sum_preimages(function.exp()).values - 1.0)))


@dataclass(frozen=True, eq=False)
class Potential:
    function: CylinderFunction
    role: Literal["raw", "normalized"] = "raw"

    def __post_init__(self):
        if self.role == "normalized":
            residual = normalization_residual(self.function)
            if residual > config.NORM_TOL:
                raise NotNormalizedError(
                    f"potential tagged normalized has sup|L1 - 1| = {residual:.3e}"
                )

    @property
    def depth(self) -> int:
        return self.function.depth

    @property
    def alphabet_size(self) -> int:
        return self.function.alphabet_size

    @property
    def values(self) -> np.ndarray:
        return self.function.values

    @property
    def is_normalized(self) -> bool:
        return self.role == "normalized"

    def same_as(self, other: "Potential") -> bool:
        if self.alphabet_size != other.alphabet_size:
            return False
        depth = max(self.depth, other.depth)
        return bool(
            np.array_equal(
                self.function.refine(depth).values, other.function.refine(depth).values
            )
        )


@dataclass(frozen=True, eq=False)
class StochasticMatrix:
    """Row-stochastic matrix with strictly positive entries."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        rows, cols = matrix.shape if matrix.ndim == 2 else (0, -1)
        if rows != cols or rows < 2:
            raise ConfigError(
                f"expected a square matrix of size >= 2, got {matrix.shape}"
            )
        if not np.all(matrix > 0):
            raise ConfigError("transition probabilities must be strictly positive")
        if np.max(np.abs(matrix.sum(axis=1) - 1.0)) > 1e-14:
            raise ConfigError(f"rows must sum to 1, got {matrix.sum(axis=1)}")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def from_rs(cls, r: float, s: float) -> "StochasticMatrix":
        """Binary chain with P₀₀ = r and P₁₁ = s."""
        return cls(np.array([[r, 1.0 - r], [1.0 - s, s]]))

    @classmethod
    def bernoulli(cls, probabilities) -> "StochasticMatrix":
        p = np.asarray(probabilities, dtype=float)
        return cls(np.tile(p, (p.size, 1)))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def r(self) -> float:
        return float(self.matrix[0, 0])

    @property
    def s(self) -> float:
        return float(self.matrix[1, 1])


@dataclass(frozen=True, eq=False)
class MarkovGibbs:
    P: StochasticMatrix
    stationary: np.ndarray  # π with πP = π
    jacobian: Potential  # depth-2 log J

    @property
    def log_j(self) -> CylinderFunction:
        return self.jacobian.function


@dataclass(frozen=True, eq=False)
class GibbsData:
    potential: Potential
    working_depth: int
    eigenvalue: float
    eigenfunction: CylinderFunction
    eigenmeasure: CylinderMeasure  # ℒ*ν = λν
    measure: CylinderMeasure  # h·ν, renormalized
    normalized: Potential  # Π(B)
    iterations: int
    residual: float

    @property
    def pressure(self) -> float:
        return float(np.log(self.eigenvalue))


@dataclass(frozen=True, eq=False)
class TangentVector:
    function: CylinderFunction
    base: Potential
    residual: float = 0.0  # sup |ℒ_A X|


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    tail_estimate: float
    correlations: tuple[float, ...]


@dataclass(frozen=True)
class JFamily:
    j0: Potential
    j2: Potential
    kind: Literal["J"] = "J"


@dataclass(frozen=True)
class LogJFamily:
    j0: Potential
    j2: Potential
    kind: Literal["logJ"] = "logJ"


@dataclass(frozen=True, eq=False)
class SimplexProblem:
    vertices: tuple[Potential, ...]
    target: Potential
    mode: Literal["min", "max"] = "min"
    slot: Literal["first", "second"] = "first"
    family: Literal["J", "logJ"] = "J"

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        if len(self.vertices) < 2:
            raise ConfigError("a simplex needs at least two vertices")
        for i, a in enumerate(self.vertices):
            if not a.is_normalized:
                raise NotNormalizedError(f"vertex {i} is not a normalized Jacobian")
            for j in range(i):
                if a.same_as(self.vertices[j]):
                    raise ConfigError(f"vertices {j} and {i} coincide")


@dataclass(frozen=True)
class Certificate:
    passed: bool
    directional_derivatives: tuple[float, ...]
    on_boundary: bool | None
    tolerance: float


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    jacobian: Potential
    weights: np.ndarray  # barycentric coordinates
    value: float
    certificate: Certificate
    vertex_values: tuple[float, ...]
    vertex_inequalities: tuple[float, ...]
    starts: int


@dataclass(frozen=True, eq=False)
class BregmanResult:
    generator: Callable[[float], float]  # λ ↦ P₁(λ)
    legendre: Callable[[float], float]
    slope_at_zero: float
    slope_at_one: float
    divergence: float  # D_KL(μ₀|μ₂) = -P₁'(0)
    endpoint_values: tuple[float, float]
    slope_oracle: float


@dataclass(frozen=True)
class BasisElement:
    label: str
    function: CylinderFunction


@dataclass(frozen=True, eq=False)
class BasisFamily:
    kind: str
    elements: tuple[BasisElement, ...]
    measure: CylinderMeasure  # deep enough to integrate every element
    base: Potential | None = None  # Jacobian for kernel kinds

    @property
    def functions(self) -> list[CylinderFunction]:
        return [e.function for e in self.elements]


@dataclass(frozen=True)
class BoundsReport:
    c0_norms: tuple[float, ...]
    l2_norms: tuple[float, ...]
    inf_abs: tuple[float, ...]  # min over cylinders of |f|
    alpha_c0: float
    beta_c0: float
    alpha_l2: float
    beta_l2: float
    alpha_pointwise: float


@dataclass(frozen=True)
class BowenRatios:
    depth: int
    k1: float
    k2: float
    ratio_min: float  # μ[x0]/μ[x1]
    ratio_max: float


@dataclass(frozen=True)
class GeodesicState:
    r: float
    s: float
    dr: float
    ds: float

    def __post_init__(self):
        margin = config.DOMAIN_MARGIN
        if not (margin < self.r < 1 - margin and margin < self.s < 1 - margin):
            raise DomainError(f"position ({self.r}, {self.s}) outside the open square")
        if not (np.isfinite(self.dr) and np.isfinite(self.ds)):
            raise DomainError("velocity must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.s, self.dr, self.ds])

    def swapped(self) -> "GeodesicState":
        return GeodesicState(self.s, self.r, self.ds, self.dr)


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    times: np.ndarray
    states: np.ndarray  # (samples, 2m): positions then velocities
    energy: np.ndarray
    columns: tuple[str, ...]
    reason: str = "t_max"
    step: float = 0.0
    error_estimate: float = 0.0

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, : self.states.shape[1] // 2]

    @property
    def energy_drift(self) -> float:
        """Relative drift of g(γ', γ'); absolute for a resting path."""
        spread = float(np.max(np.abs(self.energy - self.energy[0])))
        return spread / self.energy[0] if self.energy[0] > 0 else spread


@dataclass(frozen=True, eq=False)
class SubmanifoldChart:
    base: Potential
    basis: tuple[CylinderFunction, ...]
    bound: float
    working_depth: int
    gram_error: float = 0.0

    @property
    def dimension(self) -> int:
        return len(self.basis)


@dataclass(frozen=True)
class ChristoffelReport:
    r: float
    s: float
    theorem: tuple[float, float]  # (Γ¹₁₁, Γ²₂₂) as stated
    numeric: np.ndarray = field(repr=False)  # Γ[k, i, j] from the assembled metric
    closed_form: np.ndarray = field(repr=False)
    max_discrepancy: float = 0.0
    agrees: bool = False
    sign_only: bool = False


@dataclass(frozen=True, eq=False)
class ShootingResult:
    velocity: np.ndarray
    residual: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class DpiBounds:
    radius: float
    first_order: float  # sup ‖D_BΠ(X) - X‖ / ‖X‖
    second_order: float  # sup ‖D²_BΠ(X, X)‖ / ‖X‖²


@dataclass(frozen=True)
class OrderCheck:
    ratio: float
    order: float
    differences: tuple[float, ...]
