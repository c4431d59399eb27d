"""
Geodesics on the Markov surface and on finite-dimensional charts of normalized
potentials.

On the binary Markov surface, with coordinates (r, s) = (P₀₀, P₁₁), two
connections are available: "theorem" integrates the decoupled equations
r'' = Γ¹₁₁ r'², s'' = Γ²₂₂ s'² with the stated Christoffel symbols, and
"metric" integrates the full Levi-Civita system of the asymptotic-variance
metric g = diag(π₀/(r(1-r)), π₁/(s(1-s))). Charts t ↦ Π(A₀ + Σ tᵢēᵢ) carry
the metric ∫XᵢXⱼ dμ, assembled numerically, and its Christoffel symbols by
central differences.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Literal, Sequence

import numpy as np
from scipy import linalg

from . import config
from .errors import ChartError, ConvergenceError, DomainError, StepSizeError
from .markov import jacobian_potential, markov_coordinates
from .models.schema import (
    ChristoffelReport,
    DpiBounds,
    GeodesicPath,
    GeodesicState,
    OrderCheck,
    Potential,
    ShootingResult,
    StochasticMatrix,
    SubmanifoldChart,
)
from .symbolic import CylinderFunction, all_words, integrate
from .transfer import (
    apply_ruelle,
    gibbs_measure,
    kernel_project,
    normalization_derivative,
    normalize,
    require_normalized,
)
from utility.linear_fit import convergence_order

logger = logging.getLogger(__name__)

Connection = Literal["theorem", "metric"]
Tangents = Literal["derivative", "difference"]
Rhs = Callable[[np.ndarray], np.ndarray]

MARKOV_COLUMNS = ("t", "r", "s", "dr", "ds", "energy")

# Half-step versus full-step disagreement accepted per RK4 step
LOCAL_TOL = 1e-10
H_MIN = 1e-8
# Distance to the edge below which a failed step counts as leaving the domain
BOUNDARY_ZONE = 1e-3
TIME_EPS = 1e-12
ENERGY_TOL = 1e-4
ENERGY_REFINEMENTS = 3
CONSISTENCY_TOL = 1e-3
GRAM_TOL = 1e-8
SHOOT_TOL = 1e-6
SHOOT_MAX_ITER = 50
SHOOT_STEP = 1e-6
TWO_POINT_TOL = 1e-5


def _gamma(a: float, b: float) -> float:
    # r + s is formed first so that swapping the arguments is exact
    total = (a + b) - 2.0
    radicand = -((a - 1.0) * a * (b - 1.0) ** 3) / total**3
    if not radicand > 0.0:
        raise DomainError(f"non-positive radicand {radicand!r} at ({a}, {b})")
    return -((2.0 * a - 1.0) * (b - 1.0) / (2.0 * total)) / np.sqrt(radicand)


def christoffel(r: float, s: float) -> tuple[float, float]:
    """
    Stated Christoffel symbols (Γ¹₁₁, Γ²₂₂) of the Markov surface.

    Γ¹₁₁ = -[(2r-1)(s-1)/(2(r+s-2))]·[-(r-1)r(s-1)³/(r+s-2)³]^{-1/2} and
    Γ²₂₂ is the same expression with r and s exchanged.

    Args:
        r (float): P₀₀ in (0, 1)
        s (float): P₁₁ in (0, 1)

    Returns:
        tuple[float, float]: (Γ¹₁₁, Γ²₂₂)
    """
    if not (0.0 < r < 1.0 and 0.0 < s < 1.0):
        raise DomainError(f"({r}, {s}) is not inside the open unit square")
    return _gamma(r, s), _gamma(s, r)


def markov_metric(r: float, s: float) -> np.ndarray:
    """Asymptotic-variance metric diag(π₀/(r(1-r)), π₁/(s(1-s))) in (r, s)."""
    total = 2.0 - (r + s)
    pi0, pi1 = (1.0 - s) / total, (1.0 - r) / total
    return np.diag([pi0 / (r * (1.0 - r)), pi1 / (s * (1.0 - s))])


def markov_levi_civita(r: float, s: float) -> np.ndarray:
    """
    Exact Christoffel symbols Γ[k, i, j] of markov_metric.

    Args:
        r (float): P₀₀
        s (float): P₁₁

    Returns:
        np.ndarray: 2×2×2 array, geodesics solve x''ₖ = -Γ[k, i, j] x'ᵢ x'ⱼ
    """
    total = 2.0 - (r + s)
    g11, g22 = np.diag(markov_metric(r, s))
    # Partial derivatives of log g11 and log g22
    d1_log11 = 1.0 / total - 1.0 / r + 1.0 / (1.0 - r)
    d2_log11 = 1.0 / total - 1.0 / (1.0 - s)
    d1_log22 = 1.0 / total - 1.0 / (1.0 - r)
    d2_log22 = 1.0 / total - 1.0 / s + 1.0 / (1.0 - s)
    G = np.zeros((2, 2, 2))
    G[0, 0, 0] = 0.5 * d1_log11
    G[0, 0, 1] = G[0, 1, 0] = 0.5 * d2_log11
    G[0, 1, 1] = -0.5 * (g22 / g11) * d1_log22
    G[1, 1, 1] = 0.5 * d2_log22
    G[1, 0, 1] = G[1, 1, 0] = 0.5 * d1_log22
    G[1, 0, 0] = -0.5 * (g11 / g22) * d2_log11
    return G


def _levi_civita(
    metric: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float
) -> np.ndarray:
    """Γ[k, i, j] = ½ M⁻¹[k, l](∂ᵢM[j, l] + ∂ⱼM[i, l] - ∂ₗM[i, j]) by differences."""
    x = np.asarray(x, dtype=float)
    m = x.size
    eye = np.eye(m)
    # dM[l, i, j] = ∂ₗ M[i, j]
    dM = np.stack(
        [
            (metric(x + step * eye[l]) - metric(x - step * eye[l])) / (2.0 * step)
            for l in range(m)
        ]
    )
    bracket = dM + dM.transpose(1, 0, 2) - dM.transpose(1, 2, 0)
    return 0.5 * np.einsum("kl,ijl->kij", linalg.inv(metric(x)), bracket)


def _rk4_step(rhs: Rhs, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(
    rhs: Rhs,
    y0: np.ndarray,
    t_max: float,
    h: float,
    inside: Callable[[np.ndarray], bool],
    near_edge: Callable[[np.ndarray], bool],
    tol: float | None = LOCAL_TOL,
    h_min: float = H_MIN,
) -> tuple[np.ndarray, np.ndarray, str, float, float]:
    """
    Classical RK4 with step halving.

    With a tolerance, each step is compared with two half steps and the half
    steps are kept; without one the step is fixed. Steps that leave the
    domain are halved down to h_min, after which the path stops with
    reason "domain-exit".

    Returns:
        tuple: (times, states, reason, last step, largest error estimate)
    """
    times, states = [0.0], [np.asarray(y0, dtype=float)]
    t, y, step, worst = 0.0, states[0], h, 0.0
    reason = "t_max"
    while t_max - t > TIME_EPS:
        step = min(step, t_max - t)
        error = 0.0
        try:
            if tol is None:
                candidate = _rk4_step(rhs, y, step)
            else:
                candidate = _rk4_step(rhs, _rk4_step(rhs, y, 0.5 * step), 0.5 * step)
                error = float(np.max(np.abs(candidate - _rk4_step(rhs, y, step))))
            accepted = bool(np.all(np.isfinite(candidate))) and inside(candidate)
            accepted = accepted and (tol is None or error <= tol)
        except (DomainError, ChartError):
            accepted = False
        if not accepted:
            if 0.5 * step >= h_min:
                step *= 0.5
                logger.debug("halving step to %.3e at t=%.6f", step, t)
                continue
            if near_edge(y):
                reason = "domain-exit"
                logger.debug("path left the domain at t=%.6f", t)
                break
            raise StepSizeError(
                f"step {step:.3e} at t={t:.6f} still misses tolerance {tol}"
            )
        t += step
        y = candidate
        times.append(t)
        states.append(y)
        worst = max(worst, error)
        if tol is not None and error < tol / 32.0 and step < h:
            step = min(2.0 * step, h)
    return np.array(times), np.vstack(states), reason, step, worst


def _inside_square(y: np.ndarray) -> bool:
    margin = config.DOMAIN_MARGIN
    return bool(margin < y[0] < 1.0 - margin and margin < y[1] < 1.0 - margin)


def _near_square_edge(y: np.ndarray) -> bool:
    return min(y[0], 1.0 - y[0], y[1], 1.0 - y[1]) < BOUNDARY_ZONE


def _theorem_rhs(y: np.ndarray) -> np.ndarray:
    g1, g2 = christoffel(y[0], y[1])
    return np.array([y[2], y[3], g1 * y[2] ** 2, g2 * y[3] ** 2])


def _metric_rhs(y: np.ndarray) -> np.ndarray:
    v = y[2:]
    acceleration = -np.einsum("kij,i,j->k", markov_levi_civita(y[0], y[1]), v, v)
    return np.concatenate([v, acceleration])


def _markov_norm(r: float, s: float, velocity: np.ndarray) -> float:
    return float(np.sqrt(velocity @ markov_metric(r, s) @ velocity))


def integrate_markov_geodesic(
    state: GeodesicState,
    t_max: float,
    h: float = 1e-2,
    connection: Connection = "theorem",
    unit_speed: bool = True,
    speed: float = 1.0,
    tol: float | None = LOCAL_TOL,
) -> GeodesicPath:
    """
    Geodesic of the Markov surface from an initial state.

    Args:
        state (GeodesicState): Start (r, s) and velocity (ṙ, ṡ)
        t_max (float): Integration horizon
        h (float): Initial step
        connection (Connection): "theorem" or "metric"
        unit_speed (bool): Rescale the velocity to metric norm `speed`
        speed (float): Target metric norm when unit_speed is set
        tol (float | None): Step-halving tolerance, None for a fixed step

    Returns:
        GeodesicPath: Samples with columns t, r, s, dr, ds, energy
    """
    if connection not in ("theorem", "metric"):
        raise ValueError(f"unknown connection '{connection}'")
    y0 = state.as_array()
    norm = _markov_norm(state.r, state.s, y0[2:])
    if unit_speed and norm > 0.0:
        y0[2:] *= speed / norm
    rhs = _theorem_rhs if connection == "theorem" else _metric_rhs
    times, states, reason, step, worst = _integrate(
        rhs, y0, t_max, h, _inside_square, _near_square_edge, tol
    )
    energy = np.array([v[2:] @ markov_metric(v[0], v[1]) @ v[2:] for v in states])
    return GeodesicPath(times, states, energy, MARKOV_COLUMNS, reason, step, worst)


def fan_angles(n_directions: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n_directions) / n_directions


def markov_fan(
    start: tuple[float, float],
    angles: Sequence[float] | None = None,
    n_directions: int = 16,
    t_max: float = 2.0,
    h: float = 1e-2,
    speed: float = 1.0,
    connection: Connection = "theorem",
    unit_speed: bool = True,
    max_workers: int | None = None,
) -> list[GeodesicPath]:
    """
    Geodesics leaving one point in a fan of directions.

    Args:
        start (tuple[float, float]): Start point (r, s)
        angles (Sequence[float] | None): Direction angles, defaults to an even fan
        n_directions (int): Size of the default fan
        t_max (float): Integration horizon
        h (float): Initial step
        speed (float): Initial speed
        connection (Connection): "theorem" or "metric"
        unit_speed (bool): Measure the speed in the metric instead of coordinates
        max_workers (int | None): Thread count

    Returns:
        list[GeodesicPath]: One path per direction, in input order
    """
    if angles is None:
        angles = fan_angles(n_directions)
    angles = np.asarray(angles, dtype=float)
    if len(angles) == 0:
        raise ValueError("a fan needs at least one direction")
    r, s = start

    def run(angle: float) -> GeodesicPath:
        state = GeodesicState(r, s, speed * np.cos(angle), speed * np.sin(angle))
        return integrate_markov_geodesic(
            state, t_max, h, connection, unit_speed=unit_speed, speed=speed
        )

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(run, angles))


def non_straightness(path: GeodesicPath) -> float:
    """Largest distance of the trace from the chord joining its ends."""
    points = path.positions
    chord = points[-1] - points[0]
    offsets = points - points[0]
    length = float(np.linalg.norm(chord))
    if length == 0.0:
        return float(np.max(np.linalg.norm(offsets, axis=1)))
    cross = offsets[:, 0] * chord[1] - offsets[:, 1] * chord[0]
    return float(np.max(np.abs(cross)) / length)


def _engine_markov_metric(x: np.ndarray) -> np.ndarray:
    """∫XᵢXⱼ dμ for Xᵢ = ∂ᵢ log J, J the Jacobian of the (r, s) chain."""
    r, s = x
    eps = config.PI_STEP

    def log_j(a: float, b: float) -> CylinderFunction:
        return jacobian_potential(StochasticMatrix.from_rs(a, b)).function

    X = [
        (log_j(r + eps, s) - log_j(r - eps, s)) / (2.0 * eps),
        (log_j(r, s + eps) - log_j(r, s - eps)) / (2.0 * eps),
    ]
    mu = gibbs_measure(jacobian_potential(StochasticMatrix.from_rs(r, s)), 2)
    return np.array([[integrate(a * b, mu) for b in X] for a in X])


def christoffel_consistency(r: float, s: float) -> ChristoffelReport:
    """
    Compare the stated symbols with the Levi-Civita connection of the engine metric.

    The stated equations read x'' = +Γ x'², so they are compared with -Γ of
    the standard convention, with every other component taken as zero.

    Args:
        r (float): P₀₀
        s (float): P₁₁

    Returns:
        ChristoffelReport: Stated, numerical and closed-form symbols with flags
    """
    theorem = christoffel(r, s)
    numeric = _levi_civita(_engine_markov_metric, np.array([r, s]), config.METRIC_STEP)
    closed_form = markov_levi_civita(r, s)
    stated = np.zeros((2, 2, 2))
    stated[0, 0, 0], stated[1, 1, 1] = -theorem[0], -theorem[1]
    discrepancy = float(np.max(np.abs(stated - numeric)))
    agrees = discrepancy <= CONSISTENCY_TOL
    flipped = stated.copy()
    flipped[0, 0, 0], flipped[1, 1, 1] = theorem
    flipped_discrepancy = float(np.max(np.abs(flipped - numeric)))
    sign_only = not agrees and flipped_discrepancy <= CONSISTENCY_TOL
    if not agrees:
        logger.warning(
            "stated Christoffel symbols differ from the metric connection "
            "at (%.4f, %.4f) by %.3e (sign only: %s)",
            r,
            s,
            discrepancy,
            sign_only,
        )
    return ChristoffelReport(
        r=r,
        s=s,
        theorem=theorem,
        numeric=numeric,
        closed_form=closed_form,
        max_discrepancy=discrepancy,
        agrees=agrees,
        sign_only=sign_only,
    )


def rk4_order_check(
    state: GeodesicState,
    t_max: float = 1.0,
    h: float = 0.1,
    connection: Connection = "theorem",
) -> OrderCheck:
    """
    Endpoint differences of fixed-step runs at h, h/2 and h/4.

    Args:
        state (GeodesicState): Interior start
        t_max (float): Horizon, a multiple of h
        h (float): Coarsest step
        connection (Connection): "theorem" or "metric"

    Returns:
        OrderCheck: Ratio of successive differences (≈ 16) and fitted order
    """
    ends = []
    for level in range(3):
        path = integrate_markov_geodesic(
            state, t_max, h / 2**level, connection, unit_speed=False, tol=None
        )
        if path.reason != "t_max":
            raise DomainError("order check path left the square")
        ends.append(path.states[-1])
    differences = (
        float(np.max(np.abs(ends[0] - ends[1]))),
        float(np.max(np.abs(ends[1] - ends[2]))),
    )
    return OrderCheck(
        ratio=differences[0] / differences[1],
        order=convergence_order([h, h / 2], differences),
        differences=differences,
    )


def chart_from_basis(
    base: Potential | CylinderFunction,
    functions: Sequence[CylinderFunction],
    bound: float = 0.5,
) -> SubmanifoldChart:
    """
    Chart t ↦ Π(A₀ + Σ tᵢēᵢ) from an orthonormal kernel basis.

    Args:
        base (Potential | CylinderFunction): Normalized base A₀
        functions (Sequence[CylinderFunction]): ē₁, …, ē_m in ker ℒ_{A₀}
        bound (float): Coordinate bound b

    Returns:
        SubmanifoldChart: The validated chart
    """
    base = require_normalized(base)
    if bound <= 0.0:
        raise ChartError("chart bound must be positive")
    if not functions:
        raise ChartError("chart needs at least one basis function")
    for f in functions:
        residual = apply_ruelle(base, f).sup_norm()
        if residual > config.KERNEL_TOL:
            raise ChartError(f"basis function leaves the kernel by {residual:.3e}")
    depth = max(max(f.depth for f in functions), base.depth)
    mu = gibbs_measure(base, depth)
    gram = np.array([[integrate(a * b, mu) for b in functions] for a in functions])
    gram_error = float(np.max(np.abs(gram - np.eye(len(functions)))))
    if gram_error > GRAM_TOL:
        raise ChartError(f"basis is not orthonormal: |G - I| = {gram_error:.3e}")
    return SubmanifoldChart(base, tuple(functions), bound, depth, gram_error)


def markov_chart(r: float, s: float, bound: float = 0.5) -> SubmanifoldChart:
    """
    Two-dimensional chart over the (r, s) chain.

    The basis is the Gram–Schmidt orthonormalization of the kernel
    projections of the depth-2 cylinder indicators.

    Args:
        r (float): P₀₀ of the base chain
        s (float): P₁₁ of the base chain
        bound (float): Coordinate bound

    Returns:
        SubmanifoldChart: Chart of dimension 2
    """
    base = jacobian_potential(StochasticMatrix.from_rs(r, s))
    mu = gibbs_measure(base, 2)
    basis: list[CylinderFunction] = []
    for word in all_words(2):
        f = kernel_project(base, CylinderFunction.indicator(word, 2)).function
        for e in basis:
            f = f - integrate(f * e, mu) * e
        norm = np.sqrt(integrate(f * f, mu))
        if norm > GRAM_TOL:
            basis.append(f / norm)
    return chart_from_basis(base, basis, bound)


def chart_potential(chart: SubmanifoldChart, coords: Sequence[float]) -> Potential:
    """Π(A₀ + Σ tᵢēᵢ) for |tᵢ| < b."""
    coords = np.asarray(coords, dtype=float)
    if coords.shape != (chart.dimension,):
        raise ChartError(f"expected {chart.dimension} coordinates, got {coords.shape}")
    if np.any(np.abs(coords) >= chart.bound):
        raise ChartError(f"coordinates {coords} outside the chart bound {chart.bound}")
    raw = chart.base.function
    for c, e in zip(coords, chart.basis):
        raw = raw + c * e
    return normalize(Potential(raw))


def chart_to_markov(
    chart: SubmanifoldChart, coords: Sequence[float]
) -> tuple[float, float]:
    return markov_coordinates(chart_potential(chart, coords))


def chart_tangents(
    chart: SubmanifoldChart, coords: Sequence[float], tangents: Tangents = "derivative"
) -> tuple[Potential, list[CylinderFunction]]:
    """
    Point B of the chart and the coordinate fields Xᵢ = D Π(ēᵢ) there.

    "derivative" evaluates D_BΠ(ēᵢ) directly; "difference" uses central
    differences of Π with step PI_STEP.
    """
    coords = np.asarray(coords, dtype=float)
    B = chart_potential(chart, coords)
    if tangents == "derivative":
        return B, [normalization_derivative(B, e).function for e in chart.basis]
    eps = config.PI_STEP
    eye = np.eye(chart.dimension)
    fields = [
        (
            chart_potential(chart, coords + eps * eye[i]).function
            - chart_potential(chart, coords - eps * eye[i]).function
        )
        / (2.0 * eps)
        for i in range(chart.dimension)
    ]
    return B, fields


def submanifold_metric(
    chart: SubmanifoldChart, coords: Sequence[float], tangents: Tangents = "derivative"
) -> np.ndarray:
    """
    First fundamental form M[i, j] = ∫XᵢXⱼ dμ_B at a chart point.

    Args:
        chart (SubmanifoldChart): Chart
        coords (Sequence[float]): Point with |tᵢ| < b
        tangents (Tangents): How the coordinate fields are evaluated

    Returns:
        np.ndarray: Symmetric positive definite m×m matrix
    """
    B, fields = chart_tangents(chart, coords, tangents)
    depth = max(max(X.depth for X in fields), B.depth - 1)
    mu = gibbs_measure(B, depth)
    M = np.array([[integrate(a * b, mu) for b in fields] for a in fields])
    M = 0.5 * (M + M.T)
    if np.min(linalg.eigvalsh(M)) <= 0.0:
        raise ChartError(f"chart metric lost positive definiteness at {coords}")
    return M


def submanifold_christoffel(
    chart: SubmanifoldChart, coords: Sequence[float]
) -> np.ndarray:
    return _levi_civita(
        lambda c: submanifold_metric(chart, c),
        np.asarray(coords, float),
        config.METRIC_STEP,
    )


def _chart_columns(m: int) -> tuple[str, ...]:
    return (
        ("t",)
        + tuple(f"c{i + 1}" for i in range(m))
        + tuple(f"v{i + 1}" for i in range(m))
        + ("energy",)
    )


def integrate_submanifold_geodesic(
    chart: SubmanifoldChart,
    t0: Sequence[float],
    v0: Sequence[float],
    T: float,
    h: float = 1e-2,
    unit_speed: bool = True,
    speed: float = 1.0,
    check_energy: bool = True,
    stop_at_edge: bool = False,
) -> GeodesicPath:
    """
    Geodesic of the chart metric by fixed-step RK4 on (t, t').

    If the energy g(γ', γ') drifts by more than ENERGY_TOL the step is halved
    up to ENERGY_REFINEMENTS times.

    Args:
        chart (SubmanifoldChart): Chart
        t0 (Sequence[float]): Initial coordinates
        v0 (Sequence[float]): Initial coordinate velocity
        T (float): Horizon
        h (float): Step
        unit_speed (bool): Rescale v0 to metric norm `speed`
        speed (float): Target metric norm
        check_energy (bool): Refine the step on energy drift
        stop_at_edge (bool): End with reason "domain-exit" at the chart edge
            instead of raising

    Returns:
        GeodesicPath: Samples with columns t, c1..cm, v1..vm, energy
    """
    m = chart.dimension
    t0 = np.asarray(t0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    M0 = submanifold_metric(chart, t0)
    norm = float(np.sqrt(v0 @ M0 @ v0))
    if unit_speed and norm > 0.0:
        v0 = v0 * (speed / norm)
    y0 = np.concatenate([t0, v0])
    bound = chart.bound

    def rhs(y: np.ndarray) -> np.ndarray:
        v = y[m:]
        if not np.any(v):
            return np.zeros_like(y)
        G = submanifold_christoffel(chart, y[:m])
        return np.concatenate([v, -np.einsum("kij,i,j->k", G, v, v)])

    def inside(y: np.ndarray) -> bool:
        return bool(np.all(np.abs(y[:m]) < bound))

    def near_edge(y: np.ndarray) -> bool:
        return bool(np.max(np.abs(y[:m])) > bound - BOUNDARY_ZONE)

    step = h
    for _ in range(ENERGY_REFINEMENTS + 1):
        times, states, reason, _, _ = _integrate(
            rhs, y0, T, step, inside, near_edge, tol=None
        )
        if reason == "domain-exit" and not stop_at_edge:
            raise ChartError(f"geodesic left the chart at t={times[-1]:.6f}")
        energy = np.array(
            [y[m:] @ submanifold_metric(chart, y[:m]) @ y[m:] for y in states]
        )
        path = GeodesicPath(times, states, energy, _chart_columns(m), reason, step)
        if not check_energy or path.energy_drift <= ENERGY_TOL:
            return path
        logger.debug(
            "energy drift %.3e at step %.3e, refining", path.energy_drift, step
        )
        step *= 0.5
    raise StepSizeError(
        f"energy drift {path.energy_drift:.3e} persists at step {step * 2:.3e}"
    )


def coordinate_jacobian(chart: SubmanifoldChart) -> np.ndarray:
    """∂(r, s)/∂tᵢ at the chart origin."""
    eps = config.PI_STEP
    eye = np.eye(chart.dimension)
    columns = [
        (
            np.array(chart_to_markov(chart, eps * eye[i]))
            - np.array(chart_to_markov(chart, -eps * eye[i]))
        )
        / (2.0 * eps)
        for i in range(chart.dimension)
    ]
    return np.column_stack(columns)


def _chart_inverse(chart: SubmanifoldChart) -> np.ndarray:
    try:
        return linalg.inv(coordinate_jacobian(chart))
    except linalg.LinAlgError as e:
        raise ChartError(f"chart coordinates are degenerate at the origin: {e}") from e


def chart_fan(
    start: tuple[float, float],
    angles: Sequence[float] | None = None,
    n_directions: int = 16,
    T: float = 2.0,
    h: float = 1e-2,
    speed: float = 1.0,
    bound: float = 0.5,
    max_workers: int | None = None,
) -> tuple[SubmanifoldChart, list[GeodesicPath]]:
    """
    Chart geodesics over the (r, s) chain, one per direction angle in (r, s).

    A path that leaves the chart is cut at the last sample inside it.

    Args:
        start (tuple[float, float]): Base chain (r, s)
        angles (Sequence[float] | None): Angles of (ṙ, ṡ), defaults to an even fan
        n_directions (int): Size of the default fan
        T (float): Horizon
        h (float): Step
        speed (float): Initial metric speed
        bound (float): Chart bound
        max_workers (int | None): Thread count

    Returns:
        tuple[SubmanifoldChart, list[GeodesicPath]]: The chart and its paths, in
        input order
    """
    if angles is None:
        angles = fan_angles(n_directions)
    angles = np.asarray(angles, dtype=float)
    chart = markov_chart(*start, bound)
    inverse = _chart_inverse(chart)
    origin = np.zeros(chart.dimension)

    def run(angle: float) -> GeodesicPath:
        v0 = inverse @ np.array([np.cos(angle), np.sin(angle)])
        return integrate_submanifold_geodesic(
            chart, origin, v0, T, h, speed=speed, stop_at_edge=True
        )

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return chart, list(pool.map(run, angles))


def totally_geodesic_check(
    r: float,
    s: float,
    direction: Sequence[float],
    T: float = 0.3,
    h: float = 1e-2,
    bound: float = 0.5,
) -> tuple[float, GeodesicPath]:
    """
    Compare the chart geodesic over (r, s) with the closed-form metric geodesic.

    Both start at (r, s) with the unit-speed velocity along `direction` and
    are sampled at the same fixed steps.

    Args:
        r (float): P₀₀ of the start
        s (float): P₁₁ of the start
        direction (Sequence[float]): Velocity direction (ṙ, ṡ)
        T (float): Horizon
        h (float): Step
        bound (float): Chart bound

    Returns:
        tuple[float, GeodesicPath]: Sup distance in (r, s) and the chart path
    """
    velocity = np.asarray(direction, dtype=float)
    velocity = velocity / _markov_norm(r, s, velocity)
    chart = markov_chart(r, s, bound)
    v0 = _chart_inverse(chart) @ velocity
    chart_path = integrate_submanifold_geodesic(
        chart, np.zeros(chart.dimension), v0, T, h, unit_speed=False
    )
    reference = integrate_markov_geodesic(
        GeodesicState(r, s, *velocity), T, h, "metric", unit_speed=False, tol=None
    )
    if reference.times.size != chart_path.times.size:
        raise ConvergenceError("chart and reference paths were sampled differently")
    mapped = np.array([chart_to_markov(chart, c) for c in chart_path.positions])
    return float(np.max(np.abs(mapped - reference.positions))), chart_path


def shoot(
    chart: SubmanifoldChart,
    t_A: Sequence[float],
    t_B: Sequence[float],
    T: float = 1.0,
    h: float = 1e-2,
    max_iter: int = SHOOT_MAX_ITER,
    tol: float = SHOOT_TOL,
) -> ShootingResult:
    """
    Initial velocity of the chart geodesic from t_A reaching t_B at time T.

    Damped Newton on v ↦ endpoint(t_A, v, T) - t_B with a forward-difference
    Jacobian; stagnation is reported, not raised.

    Args:
        chart (SubmanifoldChart): Chart containing both points
        t_A (Sequence[float]): Start coordinates
        t_B (Sequence[float]): Target coordinates
        T (float): Travel time
        h (float): RK4 step
        max_iter (int): Newton iteration cap
        tol (float): Endpoint tolerance in coordinates

    Returns:
        ShootingResult: Velocity, endpoint residual and convergence flag
    """
    t_A = np.asarray(t_A, dtype=float)
    t_B = np.asarray(t_B, dtype=float)
    m = chart.dimension
    if np.array_equal(t_A, t_B):
        return ShootingResult(np.zeros(m), 0.0, 0, True)

    def miss(v: np.ndarray) -> np.ndarray | None:
        try:
            path = integrate_submanifold_geodesic(
                chart, t_A, v, T, h, unit_speed=False, check_energy=False
            )
        except ChartError:
            return None
        return path.positions[-1] - t_B

    v = (t_B - t_A) / T
    F = miss(v)
    if F is None:
        logger.warning("initial shooting guess leaves the chart")
        return ShootingResult(v, np.inf, 0, False)
    residual = float(np.max(np.abs(F)))
    iterations = 0
    eye = np.eye(m)
    while residual > tol and iterations < max_iter:
        iterations += 1
        columns = [miss(v + SHOOT_STEP * eye[i]) for i in range(m)]
        if any(c is None for c in columns):
            break
        jac = np.column_stack([(c - F) / SHOOT_STEP for c in columns])
        try:
            update = linalg.solve(jac, -F)
        except linalg.LinAlgError:
            logger.warning("singular shooting Jacobian at iteration %d", iterations)
            break
        damping = 1.0
        while damping >= 1.0 / 64.0:
            trial_F = miss(v + damping * update)
            if trial_F is not None and float(np.max(np.abs(trial_F))) < residual:
                v, F = v + damping * update, trial_F
                residual = float(np.max(np.abs(F)))
                break
            damping *= 0.5
        else:
            break
        logger.debug("shooting iteration %d: residual %.3e", iterations, residual)
    converged = residual <= tol
    if not converged:
        logger.warning(
            "shooting stagnated after %d iterations, residual %.3e",
            iterations,
            residual,
        )
    return ShootingResult(v, residual, iterations, converged)


def markov_two_point(
    p_A: Sequence[float],
    p_B: Sequence[float],
    T: float = 1.0,
    h: float = 1e-3,
    connection: Connection = "metric",
    max_iter: int = 60,
) -> ShootingResult:
    """
    Markov geodesic from p_A through p_B by bisection over the direction angle.

    Unit-speed paths are traced until their chord length reaches |p_B - p_A|;
    the sign of the cross product with p_B - p_A drives the bisection.

    Args:
        p_A (Sequence[float]): Start (r, s)
        p_B (Sequence[float]): Target (r, s)
        T (float): Arrival time of the returned velocity
        h (float): Fixed RK4 step of the traces
        connection (Connection): "metric" or "theorem"
        max_iter (int): Bisection steps

    Returns:
        ShootingResult: (ṙ, ṡ) at p_A reaching p_B at time T
    """
    p_A = np.asarray(p_A, dtype=float)
    p_B = np.asarray(p_B, dtype=float)
    delta = p_B - p_A
    distance = float(np.linalg.norm(delta))
    if distance == 0.0:
        return ShootingResult(np.zeros(2), 0.0, 0, True)
    middle = 0.5 * (p_A + p_B)
    horizon = 3.0 * _markov_norm(*middle, delta) + 5.0 * h

    def trace(angle: float) -> tuple[float, float]:
        state = GeodesicState(*p_A, np.cos(angle), np.sin(angle))
        path = integrate_markov_geodesic(state, horizon, h, connection, tol=None)
        chords = path.positions - p_A
        lengths = np.linalg.norm(chords, axis=1)
        reached = np.flatnonzero(lengths >= distance)
        if reached.size == 0:
            raise ConvergenceError(
                f"trace at angle {angle:.6f} never reaches the target"
            )
        j = int(reached[0])
        w = (distance - lengths[j - 1]) / (lengths[j] - lengths[j - 1])
        point = (1.0 - w) * chords[j - 1] + w * chords[j]
        arrival = (1.0 - w) * path.times[j - 1] + w * path.times[j]
        return float(delta[0] * point[1] - delta[1] * point[0]), float(arrival)

    center = float(np.arctan2(delta[1], delta[0]))
    lo, hi = center - 0.5, center + 0.5
    f_lo, _ = trace(lo)
    f_hi, _ = trace(hi)
    if f_lo * f_hi > 0.0:
        raise ConvergenceError("direction bracket does not contain the target")
    iterations = 0
    for iterations in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        f_mid, _ = trace(mid)
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    angle = 0.5 * (lo + hi)
    _, arrival = trace(angle)
    unit = np.array([np.cos(angle), np.sin(angle)])
    unit = unit / _markov_norm(*p_A, unit)
    velocity = unit * (arrival / T)
    endpoint = integrate_markov_geodesic(
        GeodesicState(*p_A, *velocity), T, h, connection, unit_speed=False, tol=None
    ).positions[-1]
    residual = float(np.max(np.abs(endpoint - p_B)))
    return ShootingResult(velocity, residual, iterations, residual <= TWO_POINT_TOL)


def leibniz_check(
    A0: Potential | CylinderFunction,
    xi: CylinderFunction,
    field: Callable[[float, Potential], CylinderFunction],
    t: float = 0.0,
    step: float = 1e-4,
) -> tuple[float, float]:
    """
    d/dt ∫Y dμ_{γ(t)} against ∫Y' dμ + ∫YX dμ along γ(t) = Π(A₀ + tξ).

    Y must be tangent along the curve, i.e. Y(t) ∈ ker ℒ_{γ(t)}.

    Args:
        A0 (Potential | CylinderFunction): Normalized start
        xi (CylinderFunction): Curve direction
        field (Callable[[float, Potential], CylinderFunction]): Y(t) given t and γ(t)
        t (float): Evaluation time
        step (float): Difference step for Y and the integral

    Returns:
        tuple[float, float]: (lhs, rhs)
    """
    A0 = require_normalized(A0)

    def curve(u: float) -> Potential:
        return normalize(Potential(A0.function + u * xi))

    def integral(u: float) -> float:
        B = curve(u)
        Y = field(u, B)
        return integrate(Y, gibbs_measure(B, max(Y.depth, B.depth - 1)))

    lhs = (integral(t + step) - integral(t - step)) / (2.0 * step)
    B = curve(t)
    Y = field(t, B)
    dY = (field(t + step, curve(t + step)) - field(t - step, curve(t - step))) / (
        2.0 * step
    )
    eps = config.PI_STEP
    X = (curve(t + eps).function - curve(t - eps).function) / (2.0 * eps)
    mu = gibbs_measure(B, max(dY.depth, Y.depth, X.depth, B.depth - 1))
    return lhs, integrate(dY, mu) + integrate(Y * X, mu)


def dpi_bounds(
    A: Potential | CylinderFunction,
    directions: Sequence[CylinderFunction],
    radius: float,
    step: float = 1e-3,
) -> DpiBounds:
    """
    Size of D_BΠ - I on tangent vectors of A at B = A + radius·X.

    Directions are mapped into T_A by D_AΠ and scaled to unit sup norm.

    Args:
        A (Potential | CylinderFunction): Normalized base
        directions (Sequence[CylinderFunction]): Raw directions
        radius (float): Distance of B from A along each direction
        step (float): Second-difference step

    Returns:
        DpiBounds: sup ‖D_BΠ(X) - X‖ and sup ‖D²_BΠ(X, X)‖ over the directions
    """
    A = require_normalized(A)
    first, second = 0.0, 0.0
    for u in directions:
        X = normalization_derivative(A, u).function
        X = X / X.sup_norm()
        B = A.function + radius * X
        center = normalize(Potential(B))
        drift = normalization_derivative(center, X).function - X
        first = max(first, drift.sup_norm())
        curvature = (
            normalize(Potential(B + step * X)).function
            - 2.0 * center.function
            + normalize(Potential(B - step * X)).function
        ) / step**2
        second = max(second, curvature.sup_norm())
    return DpiBounds(radius, float(first), float(second))
