from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

Matrix = List[List[float]]

BASIS_KINDS = (
    "markov-e",
    "markov-a",
    "markov-b",
    "markov-gamma",
    "gibbs-e",
    "gibbs-rho",
    "kernel-frak-a",
    "kernel-rho-hat",
    "maxent-alpha",
    "maxent-beta",
)


class StrictModel(BaseModel):
    """Base for job configuration sections: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")


class GeodesicSpec(StrictModel):
    """Fan of geodesics from one start point."""

    mode: Literal["markov", "submanifold"] = Field(
        "markov",
        description="Closed-form Markov surface or numerical S₂ chart",
        examples=["markov"],
    )
    start: tuple[float, float] = Field(
        ..., description="Start point (r, s) = (P₀₀, P₁₁)", examples=[[0.5, 0.5]]
    )
    directions: Optional[List[float]] = Field(
        None,
        min_length=1,
        description="Direction angles in radians; defaults to an even fan",
        examples=[[0.0, 1.5707963267948966]],
    )
    n_directions: int = Field(16, ge=1, description="Size of the default fan")
    speed: float = Field(1.0, gt=0, description="Initial speed")
    unit_speed: bool = Field(
        True, description="Rescale initial velocities to unit metric norm"
    )
    t_max: float = Field(2.0, gt=0, description="Integration horizon")
    h: float = Field(1e-2, gt=0, description="Initial RK4 step")
    connection: Literal["theorem", "metric"] = Field(
        "theorem", description="Christoffel symbols used on the Markov surface"
    )
    chart_bound: float = Field(0.5, gt=0, description="Coordinate bound of the chart")
    max_workers: Optional[int] = Field(None, ge=1, description="Fan worker threads")


class DivergenceSpec(StrictModel):
    """Three binary chains (P₀, P₁, P₂) with P₁ the target."""

    matrices: List[Matrix] = Field(
        ...,
        min_length=3,
        max_length=3,
        description="Row-stochastic matrices P₀, P₁, P₂",
        examples=[
            [
                [[0.2, 0.8], [0.8, 0.2]],
                [[0.15, 0.85], [0.08, 0.92]],
                [[0.9, 0.1], [0.88, 0.12]],
            ]
        ],
    )
    oracle: bool = Field(True, description="Validate derivatives by finite differences")
    references: List[float] = Field(
        default_factory=list,
        description="Quoted values to match against the second-problem derivative",
        examples=[[0.362455, 0.275]],
    )
    reference_tol: float = Field(2e-3, gt=0)
    include_bernoulli_identity: bool = Field(
        False, description="Report the Bernoulli closed form (rows must be equal)"
    )


class BasisSpec(StrictModel):
    """Basis family to materialize and verify."""

    kind: Literal[BASIS_KINDS] = Field(
        ..., description="Family kind", examples=["markov-gamma"]
    )
    n_max: int = Field(6, ge=1, le=10, description="Largest index materialized")
    matrix: Optional[Matrix] = Field(
        None, description="Binary chain for Markov and Gibbs kinds"
    )
    potential: Optional[List[float]] = Field(
        None,
        description="Raw binary potential values (length 2^p), normalized before use",
    )


class ProjectSpec(StrictModel):
    """Information projection onto a simplex of Markov Jacobians."""

    vertices: List[Matrix] = Field(..., min_length=2)
    target: Matrix
    mode: Literal["min", "max"] = "min"
    slot: Literal["first", "second"] = "first"
    family: Literal["J", "logJ"] = "J"
    max_workers: Optional[int] = Field(None, ge=1)


class JobConfig(StrictModel):
    """Validated job description read from --config or a preset."""

    command: Literal["geodesic", "divergence", "basis", "project"] = Field(
        ..., description="Command to run", examples=["divergence"]
    )
    alphabet_size: int = Field(2, ge=2)
    depth: Optional[int] = Field(None, ge=1, description="Shared working depth")
    seed: Optional[int] = Field(None, description="Seed for randomized checks")
    geodesic: Optional[GeodesicSpec] = None
    divergence: Optional[DivergenceSpec] = None
    basis: Optional[BasisSpec] = None
    project: Optional[ProjectSpec] = None

    @model_validator(mode="after")
    def section_present(self):
        if getattr(self, self.command) is None:
            raise ValueError(
                f"command '{self.command}' needs a '{self.command}' section"
            )
        return self

    @model_validator(mode="after")
    def depth_applies(self):
        # basis, chart and projection depths follow their own potentials
        if self.depth is not None and self.command != "divergence":
            raise ValueError(
                f"depth applies only to 'divergence', not '{self.command}'"
            )
        return self


class DerivativeEntry(BaseModel):
    """One derivative of λ ↦ D_KL along a family, with its oracle."""

    family: Literal["J", "logJ"]
    problem: Literal["first", "second"]
    endpoint: int
    value: float = Field(..., description="Derivative including the measure response")
    formula: float = Field(..., description="Closed form with the base measure frozen")
    oracle: Optional[float] = Field(None, description="Richardson central difference")
    matches_oracle: Optional[bool] = None
    formula_matches_oracle: Optional[bool] = None
    reference_match: Optional[float] = None
    formula_reference_match: Optional[float] = None


class DefectPair(BaseModel):
    """A defect evaluated from pairwise divergences and from its integral form."""

    pairwise: float
    integral: float


class Implication(BaseModel):
    premise: bool
    conclusion: bool

    @computed_field
    @property
    def holds(self) -> bool:
        return (not self.premise) or self.conclusion


class BoundCheck(BaseModel):
    lhs: float
    rhs: float
    holds: bool


class DivergenceReport(BaseModel):
    """Divergences, derivatives and inequality defects of a triple (μ₀, μ₁, μ₂)."""

    divergences: Dict[str, float] = Field(
        ..., description="D_KL(μ_i, μ_j) keyed 'i,j'", examples=[{"0,1": 0.7729}]
    )
    derivatives: List[DerivativeEntry]
    type1_pythagorean: DefectPair
    type2_pythagorean: DefectPair
    type1_triangle: float
    type2_triangle: float
    regime: Literal["second-law", "fluctuation", "stationary"]
    formula_regime: Literal["second-law", "fluctuation", "stationary"]
    pythagorean_chain: Implication
    triangle_implication: Implication
    log_ratio_bound: BoundCheck
    frozen_measure_bound: BoundCheck
    convexity: BoundCheck
    bernoulli_identity: Optional[List[float]] = None


class RunReport(BaseModel):
    """Deterministic record of one cli run."""

    command: str
    config_hash: str
    config: dict
    results: dict
    tolerances: dict
    checks: Dict[str, bool] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)
