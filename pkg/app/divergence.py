"""
Relative entropy of Gibbs measures along one-parameter families of Jacobians.

D_KL(μ₀|μ₁) = ∫(log J₀ - log J₁) dμ₀. Two interpolations between J₀ and J₂
are supported: the J family J^λ = λJ₂ + (1-λ)J₀, already normalized, and the
log-J family Π(λ log J₂ + (1-λ) log J₀). Every derivative has a
finite-difference oracle, and the second-problem derivatives are reported
both with and without the response of the moving measure.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import config
from .errors import AlphabetError, ConfigError, UnsupportedError
from .markov import jacobian_potential
from .models.pydantic import (
    BoundCheck,
    DefectPair,
    DerivativeEntry,
    DivergenceReport,
    Implication,
)
from .models.schema import (
    BregmanResult,
    Certificate,
    GibbsData,
    JFamily,
    LogJFamily,
    Potential,
    ProjectionResult,
    SimplexProblem,
    StochasticMatrix,
)
from .symbolic import CylinderFunction, integrate
from .transfer import (
    fisher_information,
    gibbs_measure,
    measure_at,
    normalization_derivative,
    normalize,
    poisson_solve,
    pressure,
    require_normalized,
)

logger = logging.getLogger(__name__)

Family = JFamily | LogJFamily
Problem = Literal["first", "second"]
Response = Literal["full", "formula"]

# Oracle agreement |value - oracle| <= ORACLE_RTOL·|oracle| + ORACLE_ATOL
ORACLE_RTOL = 1e-6
ORACLE_ATOL = 1e-10
# Slack for reported inequalities
BOUND_SLACK = 1e-12
CERTIFICATE_TOL = 1e-8
BOUNDARY_TOL = 1e-12
STEP_TOL = 1e-13
# Rounding floor of divergence values in the line search
VALUE_NOISE = 1e-15


def _jacobian(mu: GibbsData | Potential | CylinderFunction) -> Potential:
    if isinstance(mu, GibbsData):
        return mu.normalized
    return require_normalized(mu)


def _shared_depth(*jacobians: Potential) -> int:
    needed = max(max(J.depth for J in jacobians), 1)
    if jacobians[0].alphabet_size == 2:
        return max(needed, config.WORKING_DEPTH)
    return needed


def _matches(value: float, oracle: float | None) -> bool | None:
    if oracle is None:
        return None
    return bool(abs(value - oracle) <= ORACLE_RTOL * abs(oracle) + ORACLE_ATOL)


def kl(
    mu_from: GibbsData | Potential | CylinderFunction,
    mu_to: GibbsData | Potential | CylinderFunction,
    depth: int | None = None,
) -> float:
    """
    D_KL(μ₀|μ₁) = ∫(log J₀ - log J₁) dμ₀.

    Args:
        mu_from (GibbsData | Potential | CylinderFunction): μ₀ or its Jacobian
        mu_to (GibbsData | Potential | CylinderFunction): μ₁ or its Jacobian
        depth (int | None): Integration depth, defaults to the shared depth

    Returns:
        float: Relative entropy, exactly 0.0 for identical Jacobians
    """
    J0, J1 = _jacobian(mu_from), _jacobian(mu_to)
    if J0.alphabet_size != J1.alphabet_size:
        raise AlphabetError(
            f"alphabet mismatch: {J0.alphabet_size} vs {J1.alphabet_size}"
        )
    if J0.same_as(J1):
        return 0.0
    depth = _shared_depth(J0, J1) if depth is None else depth
    if isinstance(mu_from, GibbsData):
        mu = measure_at(mu_from, depth)
    else:
        mu = gibbs_measure(J0, depth)
    return integrate(J0.function - J1.function, mu)


def gibbs_state(J: Potential | CylinderFunction) -> Potential:
    """Validate a log-Jacobian as a state of the divergence calculus."""
    return require_normalized(J)


def j_family_member(family: JFamily, lam: float) -> Potential:
    """log(λJ₂ + (1-λ)J₀); the mixture is normalized without iteration."""
    if lam == 0.0:
        return family.j0
    if lam == 1.0:
        return family.j2
    mixed = lam * family.j2.function.exp() + (1.0 - lam) * family.j0.function.exp()
    return Potential(mixed.log(), "normalized")


def logj_family_member(family: LogJFamily, lam: float) -> Potential:
    """Π(λ log J₂ + (1-λ) log J₀)."""
    if lam == 0.0:
        return family.j0
    if lam == 1.0:
        return family.j2
    return normalize(lam * family.j2.function + (1.0 - lam) * family.j0.function)


def family_member(family: Family, lam: float) -> Potential:
    if family.kind == "J":
        return j_family_member(family, lam)
    return logj_family_member(family, lam)


def divergence_along(
    family: Family,
    problem: Problem,
    target: Potential,
    lam: float,
    depth: int | None = None,
) -> float:
    """
    D_KL(μ₁|μ^λ) for the first problem, D_KL(μ^λ|μ₁) for the second.

    Args:
        family (Family): Interpolation between J₀ and J₂
        problem (Problem): "first" or "second"
        target (Potential): Jacobian J₁ of the fixed measure
        lam (float): Family parameter
        depth (int | None): Integration depth

    Returns:
        float: The divergence at λ
    """
    member = family_member(family, lam)
    if problem == "first":
        return kl(target, member, depth)
    return kl(member, target, depth)


def fd_oracle(
    fn: Callable[[float], float],
    at: float = 0.0,
    steps: Sequence[float] = config.ORACLE_STEPS,
) -> float:
    """
    Richardson-extrapolated central difference of fn at a point.

    Args:
        fn (Callable[[float], float]): Scalar function of λ
        at (float): Evaluation point
        steps (Sequence[float]): Coarse and fine steps

    Returns:
        float: Derivative estimate with an O(h⁴) error
    """
    coarse, fine = steps

    def central(h: float) -> float:
        return (fn(at + h) - fn(at - h)) / (2.0 * h)

    ratio = (coarse / fine) ** 2
    return (ratio * central(fine) - central(coarse)) / (ratio - 1.0)


def _second_problem_terms(
    family: Family, endpoint: int, target: Potential
) -> tuple[Potential, CylinderFunction, CylinderFunction, CylinderFunction]:
    """Base Jacobian, velocity X, frozen velocity and u = log J_base - log J₁."""
    f0, f1, f2 = family.j0.function, target.function, family.j2.function
    if family.kind == "J":
        if endpoint == 0:
            X = (f2 - f0).exp() - 1.0
            return family.j0, X, X, f0 - f1
        X = 1.0 - (f0 - f2).exp()
        return family.j2, X, X, f2 - f1
    xi = f2 - f0
    return family.j0, normalization_derivative(family.j0, xi).function, xi, f0 - f1


def derivative_at(
    family: Family,
    problem: Problem,
    endpoint: int,
    target: GibbsData | Potential | CylinderFunction,
    response: Response = "full",
    depth: int | None = None,
) -> float:
    """
    d/dλ of the divergence along a family at λ = 0 or λ = 1.

    The first problem has closed forms on μ₁. For the second problem
    response="full" includes the change of the moving measure through the
    Poisson solution of u = log J_base - log J₁; response="formula" keeps
    the base measure frozen and returns ∫u·X dμ_base.

    Args:
        family (Family): Interpolation between J₀ and J₂
        problem (Problem): "first" or "second"
        endpoint (int): 0 or 1
        target (GibbsData | Potential | CylinderFunction): J₁
        response (Response): "full" or "formula"
        depth (int | None): Integration depth

    Returns:
        float: The one-sided derivative
    """
    if endpoint not in (0, 1):
        raise ConfigError(f"endpoint must be 0 or 1, got {endpoint}")
    if family.kind == "logJ" and endpoint == 1:
        raise UnsupportedError("the log-J family has no closed form at λ = 1")
    target = _jacobian(target)
    if family.j0.same_as(family.j2):
        return 0.0
    depth = _shared_depth(family.j0, family.j2, target) if depth is None else depth
    f0, f2 = family.j0.function, family.j2.function

    if problem == "first":
        mu1 = gibbs_measure(target, depth)
        if family.kind == "logJ":
            xi = f2 - f0
            return integrate(xi, gibbs_measure(family.j0, depth)) - integrate(xi, mu1)
        if endpoint == 0:
            return integrate(1.0 - (f2 - f0).exp(), mu1)
        return integrate((f0 - f2).exp() - 1.0, mu1)

    base, X, frozen, u = _second_problem_terms(family, endpoint, target)
    if response == "formula":
        integrand = u * frozen
    else:
        integrand = X * poisson_solve(base, u)
    return integrate(integrand, gibbs_measure(base, max(depth, integrand.depth)))


def derivative_entry(
    family: Family,
    problem: Problem,
    endpoint: int,
    target: Potential,
    oracle: bool = True,
    references: Sequence[float] = (),
    reference_tol: float = 2e-3,
    depth: int | None = None,
) -> DerivativeEntry:
    """Both responses of one derivative, with its oracle and reference matches."""
    value = derivative_at(family, problem, endpoint, target, "full", depth)
    formula = value
    if problem == "second":
        formula = derivative_at(family, problem, endpoint, target, "formula", depth)
    estimate = None
    if oracle:
        estimate = fd_oracle(
            lambda lam: divergence_along(family, problem, target, lam, depth), endpoint
        )

    def reference(v: float) -> float | None:
        return next((r for r in references if abs(v - r) <= reference_tol), None)

    entry = DerivativeEntry(
        family=family.kind,
        problem=problem,
        endpoint=endpoint,
        value=value,
        formula=formula,
        oracle=estimate,
        matches_oracle=_matches(value, estimate),
        formula_matches_oracle=_matches(formula, estimate),
        reference_match=reference(value),
        formula_reference_match=reference(formula),
    )
    if entry.matches_oracle is False:
        logger.warning(
            "%s/%s derivative at %d: %.12g disagrees with oracle %.12g",
            family.kind,
            problem,
            endpoint,
            value,
            estimate,
        )
    return entry


def _regime(value: float) -> str:
    if abs(value) <= BOUND_SLACK:
        return "stationary"
    return "second-law" if value > 0 else "fluctuation"


def defects(
    J0: Potential | CylinderFunction,
    J1: Potential | CylinderFunction,
    J2: Potential | CylinderFunction,
    oracle: bool = True,
    references: Sequence[float] = (),
    reference_tol: float = 2e-3,
    depth: int | None = None,
) -> DivergenceReport:
    """
    Pythagorean and triangle defects of (μ₀, μ₁, μ₂) with the family derivatives.

    Type 1 compares D(μ₂|μ₁) with D(μ₂|μ₀) + D(μ₀|μ₁); type 2 compares
    D(μ₁|μ₂) with D(μ₁|μ₀) + D(μ₀|μ₂). Pythagorean defects are
    "left minus right"; triangle defects are their negatives.

    Args:
        J0 (Potential | CylinderFunction): Jacobian of the projection candidate
        J1 (Potential | CylinderFunction): Jacobian of the target
        J2 (Potential | CylinderFunction): Jacobian of the other family end
        oracle (bool): Evaluate finite-difference oracles
        references (Sequence[float]): Quoted values to match
        reference_tol (float): Tolerance of a reference match
        depth (int | None): Shared integration depth

    Returns:
        DivergenceReport: Divergences, derivatives, defects and reported flags
    """
    J = [require_normalized(j) for j in (J0, J1, J2)]
    depth = _shared_depth(*J) if depth is None else depth
    mus = [gibbs_measure(j, depth) for j in J]
    f = [j.function for j in J]

    def D(i: int, j: int) -> float:
        return 0.0 if J[i].same_as(J[j]) else integrate(f[i] - f[j], mus[i])

    divergences = {f"{i},{j}": D(i, j) for i in range(3) for j in range(3) if i != j}

    type1 = DefectPair(
        pairwise=D(2, 1) - D(2, 0) - D(0, 1),
        integral=integrate(f[0] - f[1], mus[2]) - integrate(f[0] - f[1], mus[0]),
    )
    type2 = DefectPair(
        pairwise=D(1, 2) - D(1, 0) - D(0, 2),
        integral=integrate(f[0] - f[2], mus[1]) - integrate(f[0] - f[2], mus[0]),
    )

    j_family, logj_family = JFamily(J[0], J[2]), LogJFamily(J[0], J[2])
    plan = [
        (j_family, "first", 0),
        (j_family, "first", 1),
        (j_family, "second", 0),
        (j_family, "second", 1),
        (logj_family, "first", 0),
        (logj_family, "second", 0),
    ]
    entries = [
        derivative_entry(
            fam, problem, endpoint, J[1], oracle, references, reference_tol, depth
        )
        for fam, problem, endpoint in plan
    ]
    first0, _, second0, second1 = entries[:4]

    log_ratio = integrate(f[0] - f[2], mus[1])
    X = (f[2] - f[0]).exp() - 1.0
    frozen_rhs = integrate(f[0] * X, mus[0]) - integrate(f[1] * (f[0] - f[2]), mus[0])

    report = DivergenceReport(
        divergences=divergences,
        derivatives=entries,
        type1_pythagorean=type1,
        type2_pythagorean=type2,
        type1_triangle=-type1.pairwise,
        type2_triangle=-type2.pairwise,
        regime=_regime(second0.value),
        formula_regime=_regime(second0.formula),
        pythagorean_chain=Implication(
            premise=type2.integral >= 0.0, conclusion=first0.value >= D(0, 2)
        ),
        triangle_implication=Implication(
            premise=first0.value < 0.0,
            conclusion=D(1, 2) <= D(1, 0) + D(0, 2) + BOUND_SLACK,
        ),
        log_ratio_bound=BoundCheck(
            lhs=log_ratio,
            rhs=first0.value,
            holds=log_ratio >= first0.value - BOUND_SLACK,
        ),
        frozen_measure_bound=BoundCheck(
            lhs=second0.formula,
            rhs=frozen_rhs,
            holds=second0.formula <= frozen_rhs + BOUND_SLACK,
        ),
        convexity=BoundCheck(
            lhs=second0.value,
            rhs=second1.value,
            holds=second0.value <= second1.value + BOUND_SLACK,
        ),
    )
    logger.info(
        "defects: type1 %.6g, type2 %.6g, regime %s",
        type1.pairwise,
        type2.pairwise,
        report.regime,
    )
    return report


def bernoulli_identity(p0: float, p1: float, p2: float) -> tuple[float, float, float]:
    """
    Second-problem J-family derivative at 0 for binary Bernoulli measures.

    Args:
        p0 (float): Probability of symbol 0 under μ₀
        p1 (float): Probability of symbol 0 under μ₁
        p2 (float): Probability of symbol 0 under μ₂

    Returns:
        tuple[float, float, float]: (derivative, type-1 defect, closed form)
    """
    J0, J1, J2 = (
        jacobian_potential(StochasticMatrix.bernoulli([p, 1.0 - p]))
        for p in (p0, p1, p2)
    )
    derivative = derivative_at(JFamily(J0, J2), "second", 0, J1)
    depth = _shared_depth(J0, J1, J2)
    gap = J0.function - J1.function
    defect = integrate(gap, gibbs_measure(J2, depth)) - integrate(
        gap, gibbs_measure(J0, depth)
    )
    closed = (p0 - p2) * (
        np.log(1.0 - p0) - np.log(p0) - np.log(1.0 - p1) + np.log(p1)
    )
    return derivative, defect, float(closed)


def bregman(
    J0: Potential | CylinderFunction, J2: Potential | CylinderFunction
) -> BregmanResult:
    """
    Pressure generator P₁(λ) = P(log J₀ + λξ), ξ = log J₂ - log J₀.

    P₁ is convex with P₁(0) = P₁(1) = 0, slopes ∫ξ dμ₀ and ∫ξ dμ₂ at the ends,
    and D_KL(μ₀|μ₂) = -P₁'(0).

    Args:
        J0 (Potential | CylinderFunction): Normalized log-Jacobian
        J2 (Potential | CylinderFunction): Normalized log-Jacobian

    Returns:
        BregmanResult: Generator, its Legendre transform on [0, 1] and slopes
    """
    J0, J2 = require_normalized(J0), require_normalized(J2)
    xi = J2.function - J0.function
    depth = _shared_depth(J0, J2)

    def generator(lam: float) -> float:
        return pressure(J0.function + lam * xi)

    endpoint_values = (generator(0.0), generator(1.0))

    def legendre(eta: float) -> float:
        inner = minimize_scalar(
            lambda lam: generator(lam) - lam * eta,
            bounds=(0.0, 1.0),
            method="bounded",
            options={"xatol": 1e-10},
        )
        return max(-endpoint_values[0], eta - endpoint_values[1], -float(inner.fun))

    slope0 = integrate(xi, gibbs_measure(J0, depth))
    slope1 = integrate(xi, gibbs_measure(J2, depth))
    return BregmanResult(
        generator=generator,
        legendre=legendre,
        slope_at_zero=slope0,
        slope_at_one=slope1,
        divergence=-slope0,
        endpoint_values=endpoint_values,
        slope_oracle=fd_oracle(generator, 0.0),
    )


def fisher_expansion_ratio(
    J0: Potential | CylinderFunction,
    J2: Potential | CylinderFunction,
    lam: float = 1e-2,
) -> float:
    """
    D_KL(μ₀|μ^λ) / (½λ²∫ξ̂² dμ₀) along the log-J family, ξ̂ = D_{J₀}Π(ξ).

    Args:
        J0 (Potential | CylinderFunction): Base Jacobian
        J2 (Potential | CylinderFunction): Other end of the family
        lam (float): Small family parameter

    Returns:
        float: Ratio tending to 1 as λ → 0
    """
    J0, J2 = require_normalized(J0), require_normalized(J2)
    xi_hat = normalization_derivative(J0, J2.function - J0.function)
    info = fisher_information(J0, xi_hat)
    member = logj_family_member(LogJFamily(J0, J2), lam)
    return kl(J0, member) / (0.5 * lam**2 * info)


def project_onto_simplex(v: np.ndarray) -> np.ndarray:
    """
    Euclidean projection onto {w >= 0, Σw = 1} by sorting.

    Args:
        v (np.ndarray): Point to project

    Returns:
        np.ndarray: Closest point of the probability simplex
    """
    n = v.size
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    ind = np.arange(1, n + 1)
    cond = u - cssv / ind > 0
    rho = ind[cond][-1]
    theta = cssv[cond][-1] / float(rho)
    return np.maximum(v - theta, 0.0)


class _SimplexObjective:
    """Divergence and its vertex directional derivatives on a simplex."""

    def __init__(self, problem: SimplexProblem):
        self.problem = problem
        self.sign = 1.0 if problem.mode == "min" else -1.0
        self.family_cls = JFamily if problem.family == "J" else LogJFamily

    def point(self, w: np.ndarray) -> Potential:
        vertices = self.problem.vertices
        support = np.flatnonzero(w > 0.0)
        if support.size == 1:
            return vertices[support[0]]
        if self.problem.family == "J":
            mixed = sum(w[i] * vertices[i].function.exp() for i in support)
            return Potential(mixed.log(), "normalized")
        return normalize(sum(w[i] * vertices[i].function for i in support))

    def value(self, w: np.ndarray) -> float:
        J = self.point(w)
        if self.problem.slot == "first":
            return kl(self.problem.target, J)
        return kl(J, self.problem.target)

    def directions(self, w: np.ndarray) -> np.ndarray:
        """D_r: derivative toward vertex r along the family from J(w)."""
        J = self.point(w)
        return np.array(
            [
                derivative_at(
                    self.family_cls(J, v), self.problem.slot, 0, self.problem.target
                )
                for v in self.problem.vertices
            ]
        )

    def descend(self, w: np.ndarray, max_iter: int = 500) -> tuple[np.ndarray, float]:
        """Projected gradient with Barzilai–Borwein steps and backtracking."""
        f = self.sign * self.value(w)
        g = self.sign * self.directions(w)
        step = 1.0
        for _ in range(max_iter):
            while True:
                candidate = project_onto_simplex(w - step * g)
                s = candidate - w
                if np.max(np.abs(s)) <= STEP_TOL:
                    return w, self.sign * f
                fc = self.sign * self.value(candidate)
                if fc <= f + g @ s + (s @ s) / (2.0 * step) + VALUE_NOISE:
                    break
                step *= 0.5
                if step < 1e-16:
                    return w, self.sign * f
            gc = self.sign * self.directions(candidate)
            sy = s @ (gc - g)
            step = min((s @ s) / sy, 1e6) if sy > 0.0 else min(2.0 * step, 1e6)
            w, f, g = candidate, fc, gc
        logger.warning("projected gradient stopped after %d iterations", max_iter)
        return w, self.sign * f

    def refine_edge(self, w: np.ndarray, value: float) -> tuple[np.ndarray, float]:
        support = np.flatnonzero(w > BOUNDARY_TOL)
        if support.size != 2:
            return w, value
        i, j = support
        n = w.size

        def on_edge(t: float) -> np.ndarray:
            x = np.zeros(n)
            x[i], x[j] = t, 1.0 - t
            return x

        result = minimize_scalar(
            lambda t: self.sign * self.value(on_edge(t)),
            bounds=(0.0, 1.0),
            method="bounded",
            options={"xatol": 1e-12},
        )
        refined = self.sign * float(result.fun)
        if self.sign * refined < self.sign * value:
            return on_edge(float(result.x)), refined
        return w, value


def project_simplex(
    problem: SimplexProblem, max_workers: int | None = None
) -> ProjectionResult:
    """
    Optimize the divergence to a target over the convex hull of vertex Jacobians.

    Runs projected gradient from every vertex and the barycenter in parallel;
    ties go to the earliest start. The optimum is certified by the signs of
    the directional derivatives toward all vertices.

    Args:
        problem (SimplexProblem): Vertices, target, mode, slot and family
        max_workers (int | None): Thread count for the starts

    Returns:
        ProjectionResult: Optimal Jacobian, weights, value and certificate
    """
    objective = _SimplexObjective(problem)
    n = len(problem.vertices)
    if problem.target.alphabet_size != problem.vertices[0].alphabet_size:
        raise AlphabetError("target and vertices use different alphabets")
    starts = [np.eye(n)[r] for r in range(n)] + [np.full(n, 1.0 / n)]

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        runs = list(pool.map(objective.descend, starts))

    vertex_values = tuple(objective.value(e) for e in starts[:n])
    best_w, best_value = runs[0]
    for w, value in runs[1:]:
        if objective.sign * value < objective.sign * best_value:
            best_w, best_value = w, value
    if problem.mode == "max":
        r = int(np.argmax(vertex_values))
        if vertex_values[r] > best_value:
            best_w, best_value = starts[r], vertex_values[r]
    best_w, best_value = objective.refine_edge(best_w, best_value)

    directional = objective.directions(best_w)
    if problem.mode == "min":
        passed = bool(np.all(directional >= -CERTIFICATE_TOL))
        on_boundary = None
    else:
        passed = bool(np.all(directional <= CERTIFICATE_TOL))
        on_boundary = bool(np.min(best_w) <= BOUNDARY_TOL)
    if not passed:
        logger.warning("projection certificate failed: %s", directional)

    jacobian = objective.point(best_w)
    inequalities: tuple[float, ...] = ()
    if problem.family == "J":
        mu1 = gibbs_measure(problem.target, _shared_depth(jacobian, problem.target))
        inequalities = tuple(
            integrate(1.0 - (jacobian.function - v.function).exp(), mu1)
            for v in problem.vertices
        )
    return ProjectionResult(
        jacobian=jacobian,
        weights=best_w,
        value=best_value,
        certificate=Certificate(
            passed=passed,
            directional_derivatives=tuple(float(x) for x in directional),
            on_boundary=on_boundary,
            tolerance=CERTIFICATE_TOL,
        ),
        vertex_values=vertex_values,
        vertex_inequalities=inequalities,
        starts=len(starts),
    )
