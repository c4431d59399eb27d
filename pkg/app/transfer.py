"""
Ruelle transfer operator on cylinder functions.

A working depth k handles potentials of depth at most k + 1 exactly: the
transfer matrix acts on depth-k functions and has d nonzeros per row.
"""

import logging
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, sparse

from . import config
from .errors import (
    BaseMismatchError,
    ConvergenceError,
    DepthError,
    MeanError,
    NotNormalizedError,
    UnsupportedError,
)
from .models.schema import (
    GibbsData,
    Potential,
    TangentVector,
    VarianceEstimate,
    normalization_residual as _residual,
)
from .symbolic import (
    CylinderFunction,
    CylinderMeasure,
    check_depth,
    compose_shift,
    integrate,
    mirror_apply,
    sum_preimages,
)
from utility.linear_fit import geometric_rate

logger = logging.getLogger(__name__)

# Extra iterations allowed after tolerance while the residual keeps falling
POLISH_ITERATIONS = 64


def as_potential(B: Potential | CylinderFunction) -> Potential:
    return B if isinstance(B, Potential) else Potential(B)


def require_normalized(A: Potential | CylinderFunction) -> Potential:
    """
    Return A tagged as normalized, or raise if sup|ℒ_A 1 - 1| exceeds tol_norm.

    Args:
        A (Potential | CylinderFunction): Candidate normalized potential

    Returns:
        Potential: The same function with role "normalized"
    """
    A = as_potential(A)
    if A.is_normalized:
        return A
    residual = _residual(A.function)
    if residual > config.NORM_TOL:
        raise NotNormalizedError(
            f"potential is not normalized: sup|L1 - 1| = {residual:.3e}"
        )
    return Potential(A.function, "normalized")


def normalization_residual(B: Potential | CylinderFunction) -> float:
    """sup |ℒ_B 1 - 1|."""
    return _residual(as_potential(B).function)


def working_depth(B: Potential, depth: int | None = None) -> int:
    minimal = max(B.depth - 1, 0)
    if depth is None:
        return minimal
    if depth < minimal:
        raise DepthError(
            f"working depth {depth} too shallow for a potential of depth {B.depth}"
        )
    return depth


def ruelle_matrix(B: Potential | CylinderFunction, depth: int) -> sparse.csr_matrix:
    """
    Transfer matrix of ℒ_B on depth-k functions.

    Row x holds e^{B(a·x)} in the column of the depth-k prefix of a·x.

    Args:
        B (Potential | CylinderFunction): Potential of depth at most k + 1
        depth (int): Working depth k

    Returns:
        sparse.csr_matrix: d^k × d^k matrix with d nonzeros per row
    """
    B = as_potential(B)
    k = working_depth(B, depth)
    d = B.alphabet_size
    check_depth(d, k + 1)
    n = d**k
    weights = B.function.refine(k + 1).exp().values.reshape(d, n)
    rows = np.tile(np.arange(n), d)
    if k == 0:
        cols = np.zeros(d, dtype=int)
    else:
        cols = np.arange(d)[:, None] * d ** (k - 1) + np.arange(n)[None, :] // d
        cols = cols.ravel()
    return sparse.coo_matrix((weights.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def apply_ruelle(
    B: Potential | CylinderFunction, f: CylinderFunction
) -> CylinderFunction:
    """
    (ℒ_B f)(x) = Σ_a e^{B(a·x)} f(a·x).

    Args:
        B (Potential | CylinderFunction): Potential
        f (CylinderFunction): Function to transfer

    Returns:
        CylinderFunction: Output of depth max(depth(B), depth(f), 1) - 1
    """
    B = as_potential(B)
    k = max(B.depth, f.depth, 1)
    return sum_preimages(B.function.refine(k).exp() * f.refine(k))


def _power_iterate(
    step: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
    scale: Callable[[np.ndarray], float],
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, float, int, float]:
    x = start
    converged_at = None
    last = np.inf
    for iteration in range(1, max_iter + 1):
        y = step(x)
        lam = scale(y)
        if not np.all(y > 0) or not np.isfinite(lam):
            raise ConvergenceError(f"non-positive iterate at iteration {iteration}")
        residual = float(np.max(np.abs(y - lam * x)) / (lam * np.max(x)))
        x = y / lam
        if converged_at is None:
            if residual <= tol:
                converged_at = iteration
        elif residual >= last or iteration - converged_at >= POLISH_ITERATIONS:
            return x, lam, iteration, min(residual, last)
        last = residual
    if converged_at is None:
        raise ConvergenceError(
            f"power iteration did not reach {tol:g} in {max_iter} iterations "
            f"(residual {last:.3e})"
        )
    return x, lam, max_iter, last


def leading_eigendata(
    B: Potential | CylinderFunction,
    depth: int | None = None,
    tol: float | None = None,
    max_iter: int | None = None,
) -> GibbsData:
    """
    Leading eigenvalue, eigenfunction, eigenmeasure and Gibbs measure of ℒ_B.

    Args:
        B (Potential | CylinderFunction): Potential with e^B > 0
        depth (int | None): Working depth k, defaults to depth(B) - 1
        tol (float | None): Residual tolerance
        max_iter (int | None): Iteration cap

    Returns:
        GibbsData: Eigendata, Gibbs measure at depth k and Π(B)
    """
    B = as_potential(B)
    tol = config.EIGEN_TOL if tol is None else tol
    max_iter = config.EIGEN_MAX_ITER if max_iter is None else max_iter
    k = working_depth(B, depth)
    d = B.alphabet_size
    n = d**k
    M = ruelle_matrix(B, k)
    MT = M.T.tocsr()

    h, lam, it_h, res_h = _power_iterate(
        lambda v: M @ v, np.ones(n), np.max, tol, max_iter
    )
    h = h / np.max(h)
    nu, lam_star, it_nu, res_nu = _power_iterate(
        lambda v: MT @ v, np.full(n, 1.0 / n), np.sum, tol, max_iter
    )
    logger.debug(
        "eigendata depth=%d: lambda=%.17g (adjoint %.17g), iterations %d/%d",
        k,
        lam,
        lam_star,
        it_h,
        it_nu,
    )

    eigenfunction = CylinderFunction(d, k, h)
    weights = h * nu
    measure = CylinderMeasure(d, k, weights / weights.sum())
    eigenmeasure = CylinderMeasure(d, k, nu / nu.sum())

    # Π(B) = B + log h - log h∘σ - log λ
    log_h = eigenfunction.log()
    out_depth = max(B.depth, k + 1)
    pi_b = (
        B.function.refine(out_depth)
        + log_h.refine(out_depth)
        - compose_shift(log_h).refine(out_depth)
        - np.log(lam)
    )
    residual = _residual(pi_b)
    if residual > config.NORM_TOL:
        raise ConvergenceError(
            f"normalized potential misses L1 = 1 by {residual:.3e}; "
            "tighten the eigen tolerance"
        )
    return GibbsData(
        potential=B,
        working_depth=k,
        eigenvalue=float(lam),
        eigenfunction=eigenfunction,
        eigenmeasure=eigenmeasure,
        measure=measure,
        normalized=Potential(pi_b, "normalized"),
        iterations=it_h + it_nu,
        residual=max(res_h, res_nu),
    )


def pressure(B: Potential | CylinderFunction, depth: int | None = None) -> float:
    """P(B) = log λ_B."""
    return leading_eigendata(B, depth).pressure


def normalize(B: Potential | CylinderFunction) -> Potential:
    """Π(B) = B + log h_B - log h_B∘σ - log λ_B."""
    B = as_potential(B)
    if B.is_normalized:
        return B
    return leading_eigendata(B).normalized


def extend_measure(
    mu: CylinderMeasure, A: Potential, depth: int
) -> CylinderMeasure:
    """
    Move a Gibbs measure to another depth.

    Deeper levels use μ[a·w] = e^{A(a·w)} μ[w], exact once |w| >= depth(A) - 1;
    shallower levels are obtained by summing.

    Args:
        mu (CylinderMeasure): Gibbs measure of A at some depth
        A (Potential): Normalized potential of the measure
        depth (int): Target depth

    Returns:
        CylinderMeasure: μ at the target depth
    """
    if depth <= mu.depth:
        return mu.coarsen(depth)
    if mu.depth < A.depth - 1:
        raise DepthError(
            f"measure depth {mu.depth} too shallow to extend with a potential of "
            f"depth {A.depth}"
        )
    check_depth(mu.alphabet_size, depth)
    jacobian = A.function.exp()
    weights = mu.weights
    for m in range(mu.depth, depth):
        weights = jacobian.refine(m + 1).values * np.tile(weights, mu.alphabet_size)
    logger.debug("extended measure from depth %d to %d", mu.depth, depth)
    return CylinderMeasure(mu.alphabet_size, depth, weights / weights.sum())


def measure_at(data: GibbsData, depth: int) -> CylinderMeasure:
    return extend_measure(data.measure, data.normalized, depth)


def gibbs_measure(A: Potential | CylinderFunction, depth: int) -> CylinderMeasure:
    """Gibbs measure of A materialized at the given depth."""
    return measure_at(leading_eigendata(A), depth)


def entropy(A: Potential | CylinderFunction) -> float:
    """Entropy -∫A dμ_A of a normalized potential."""
    A = require_normalized(A)
    return -integrate(A.function, gibbs_measure(A, A.depth))


def poisson_solve(
    A: Potential | CylinderFunction, f: CylinderFunction
) -> CylinderFunction:
    """
    Zero-mean solution w of (I - ℒ_A) w = f - ∫f dμ_A, i.e. w = Σ_{n>=0} ℒ_A^n f̄.

    Args:
        A (Potential | CylinderFunction): Normalized potential
        f (CylinderFunction): Right-hand side

    Returns:
        CylinderFunction: w at depth max(depth(f), depth(A) - 1)
    """
    A = require_normalized(A)
    k = max(f.depth, A.depth - 1)
    mu = gibbs_measure(A, k)
    M = ruelle_matrix(A, k).toarray()
    n = M.shape[0]
    centred = f.refine(k).values - integrate(f, mu)
    # μᵀ(I - M) = 0, so the rank-one term pins ∫w dμ = 0 without moving w
    system = np.eye(n) - M + np.outer(np.ones(n), mu.weights)
    try:
        w = linalg.solve(system, centred)
    except linalg.LinAlgError as e:
        raise ConvergenceError(f"Poisson system at depth {k} is singular: {e}") from e
    return CylinderFunction(A.alphabet_size, k, w)


def kernel_project(
    A: Potential | CylinderFunction, f: CylinderFunction
) -> TangentVector:
    """
    Project f into the kernel of ℒ_A by f ↦ f - (ℒ_A f)∘σ.

    Args:
        A (Potential | CylinderFunction): Normalized potential
        f (CylinderFunction): Function to project

    Returns:
        TangentVector: Kernel element with its ℒ_A residual
    """
    A = require_normalized(A)
    projected = f - compose_shift(apply_ruelle(A, f))
    residual = apply_ruelle(A, projected).sup_norm()
    if residual > config.KERNEL_TOL:
        raise ConvergenceError(f"kernel projection residual {residual:.3e}")
    return TangentVector(projected, A, residual)


def transfer_project(
    A: Potential | CylinderFunction, phi: CylinderFunction
) -> TangentVector:
    """
    Binary kernel projection 𝒯(φ) = φ·1_[0] - (J(𝔖)φ(𝔖)/J)·1_[1].

    On [0]-carried φ this is the general projection divided by x ↦ J(1·σx).

    Args:
        A (Potential | CylinderFunction): Normalized potential log J, d = 2
        phi (CylinderFunction): Function whose [0] part is kept

    Returns:
        TangentVector: Kernel element determined by φ on [0]
    """
    A = require_normalized(A)
    if A.alphabet_size != 2:
        raise UnsupportedError("the mirrored projection needs a binary alphabet")
    k = max(A.depth, phi.depth, 1)
    J = A.function.refine(k).exp()
    lower = phi.refine(k).restrict(0)
    upper = -(mirror_apply(J * lower) / J).restrict(1)
    projected = lower + upper
    residual = apply_ruelle(A, projected).sup_norm()
    return TangentVector(projected, A, residual)


def normalization_derivative(
    A: Potential | CylinderFunction, xi: CylinderFunction
) -> TangentVector:
    """
    D_AΠ(ξ) = ξ - ∫ξ dμ_A + v - v∘σ with v = Σ_{n>=1} ℒ_A^n ξ̄.

    This is the kernel element cohomologous to ξ - ∫ξ dμ_A, the velocity of
    t ↦ Π(A + tξ) at t = 0.

    Args:
        A (Potential | CylinderFunction): Normalized potential
        xi (CylinderFunction): Direction

    Returns:
        TangentVector: D_AΠ(ξ)
    """
    A = require_normalized(A)
    mu = gibbs_measure(A, max(xi.depth, A.depth - 1))
    centred = xi - integrate(xi, mu)
    v = apply_ruelle(A, poisson_solve(A, centred))
    tangent = centred + v - compose_shift(v)
    residual = apply_ruelle(A, tangent).sup_norm()
    if residual > config.KERNEL_TOL:
        raise ConvergenceError(f"tangent residual {residual:.3e}")
    return TangentVector(tangent, A, residual)


def _tangent_function(
    A: Potential, X: TangentVector | CylinderFunction
) -> CylinderFunction:
    if isinstance(X, TangentVector):
        if not X.base.same_as(A):
            raise BaseMismatchError("tangent vector lives at a different base")
        return X.function
    return X


def metric_inner(
    A: Potential | CylinderFunction,
    X: TangentVector | CylinderFunction,
    Y: TangentVector | CylinderFunction,
) -> float:
    """g_A(X, Y) = ∫XY dμ_A."""
    A = require_normalized(A)
    product = _tangent_function(A, X) * _tangent_function(A, Y)
    return integrate(product, gibbs_measure(A, max(product.depth, A.depth - 1)))


def fisher_information(
    A: Potential | CylinderFunction, xi: TangentVector | CylinderFunction
) -> float:
    """∫ξ² dμ_A."""
    return metric_inner(A, xi, xi)


def asymptotic_variance(
    A: Potential | CylinderFunction,
    f: TangentVector | CylinderFunction,
    n_terms: int = 64,
    mean_tol: float = 1e-9,
) -> VarianceEstimate:
    """
    Green–Kubo sum ∫f² dμ + 2 Σ_{n=1}^{N} ∫f·(f∘σⁿ) dμ for zero-mean f.

    Correlations are evaluated as ∫(ℒ_A^n f)·f dμ_A so the depth never grows.
    The tail estimate extrapolates the geometric decay of the correlations.

    Args:
        A (Potential | CylinderFunction): Normalized potential
        f (TangentVector | CylinderFunction): Zero-mean observable
        n_terms (int): Number of correlation terms N
        mean_tol (float): Allowed |∫f dμ_A|

    Returns:
        VarianceEstimate: Truncated sum, tail estimate and correlations
    """
    A = require_normalized(A)
    f = _tangent_function(A, f)
    mu = gibbs_measure(A, max(f.depth, A.depth - 1))
    mean = integrate(f, mu)
    if abs(mean) > mean_tol:
        raise MeanError(f"observable has mean {mean:.3e}, expected 0")

    correlations = []
    g = f
    for _ in range(n_terms):
        g = apply_ruelle(A, g)
        correlations.append(integrate(g * f, mu))

    value = integrate(f * f, mu) + 2.0 * float(np.sum(correlations))
    tail = 0.0
    if correlations and correlations[-1] != 0.0:
        rate = geometric_rate(correlations)
        last = abs(correlations[-1])
        tail = 2.0 * last * rate / (1.0 - rate) if rate < 1.0 else 2.0 * last
    return VarianceEstimate(value, tail, tuple(correlations))


def pressure_derivative_check(
    J0: Potential | CylinderFunction, xi: CylinderFunction, h_step: float = 1e-4
) -> tuple[float, float]:
    """
    Central difference of t ↦ P(log J₀ + tξ) at 0 against ∫ξ dμ₀.

    Args:
        J0 (Potential | CylinderFunction): Normalized log-Jacobian
        xi (CylinderFunction): Direction
        h_step (float): Difference step

    Returns:
        tuple[float, float]: (finite difference, integral)
    """
    J0 = require_normalized(J0)
    lhs = (
        pressure(J0.function + h_step * xi) - pressure(J0.function - h_step * xi)
    ) / (2.0 * h_step)
    rhs = integrate(xi, gibbs_measure(J0, max(xi.depth, J0.depth - 1)))
    return lhs, rhs


def pressure_hessian_check(
    A: Potential | CylinderFunction,
    X: TangentVector | CylinderFunction,
    Y: TangentVector | CylinderFunction,
    h_step: float = 1e-3,
) -> tuple[float, float]:
    """
    Mixed second difference of (s, t) ↦ P(A + sX + tY) against ∫XY dμ_A.

    Args:
        A (Potential | CylinderFunction): Normalized potential
        X (TangentVector | CylinderFunction): Kernel direction
        Y (TangentVector | CylinderFunction): Kernel direction
        h_step (float): Difference step

    Returns:
        tuple[float, float]: (finite difference, metric value)
    """
    A = require_normalized(A)
    x = _tangent_function(A, X)
    y = _tangent_function(A, Y)
    corners = [
        sign_x
        * sign_y
        * pressure(A.function + sign_x * h_step * x + sign_y * h_step * y)
        for sign_x in (1.0, -1.0)
        for sign_y in (1.0, -1.0)
    ]
    return float(np.sum(corners) / (4.0 * h_step**2)), metric_inner(A, x, y)


def duality_check(
    A: Potential | CylinderFunction, f: CylinderFunction, g: CylinderFunction
) -> tuple[float, float]:
    """(∫(ℒ_A f)·g dμ_A, ∫f·(g∘σ) dμ_A)."""
    A = require_normalized(A)
    left = apply_ruelle(A, f) * g
    right = f * compose_shift(g)
    mu = gibbs_measure(A, max(left.depth, right.depth, A.depth - 1))
    return integrate(left, mu), integrate(right, mu)


def shift_invariance_defect(
    A: Potential | CylinderFunction, samples: Sequence[CylinderFunction]
) -> float:
    """max over samples of |∫f∘σ dμ_A - ∫f dμ_A|."""
    A = require_normalized(A)
    depth = max(max(f.depth for f in samples) + 1, A.depth - 1)
    mu = gibbs_measure(A, depth)
    return max(abs(integrate(compose_shift(f), mu) - integrate(f, mu)) for f in samples)
