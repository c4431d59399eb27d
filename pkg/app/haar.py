"""
Haar and Fourier-like bases on the binary shift.

Haar families are indexed by words and lose uniform C⁰ bounds with depth;
the Fourier-like families aggregate one Haar generation at a time
(γ_n, ρ_n, ρ̂_n) and keep their norms inside a fixed band.
"""

import logging
from typing import Sequence

import numpy as np

from .errors import AlphabetError, ConfigError, DepthError
from .markov import as_matrix, jacobian_potential, stationary_vector
from .models.schema import (
    BasisElement,
    BasisFamily,
    BoundsReport,
    BowenRatios,
    Potential,
    StochasticMatrix,
)
from .models.pydantic import BASIS_KINDS
from .symbolic import (
    CylinderFunction,
    CylinderMeasure,
    Word,
    all_words,
    check_depth,
    compose_branch,
    digits,
    integrate,
    mirror_apply,
)
from .transfer import apply_ruelle, gibbs_measure, require_normalized, transfer_project

logger = logging.getLogger(__name__)

MAXENT = Potential(CylinderFunction.constant(-np.log(2.0)), "normalized")
# Values closer than this count as one level set in the generation check
LEVEL_DECIMALS = 9


def _binary_word(x: Word | Sequence[int]) -> Word:
    word = x if isinstance(x, Word) else Word(tuple(x))
    if word.alphabet_size != 2:
        raise AlphabetError("Haar constructions are defined on the binary shift")
    if len(word) < 1:
        raise DepthError("Haar elements are indexed by non-empty words")
    return word


def _binary_chain(P: StochasticMatrix | np.ndarray) -> StochasticMatrix:
    P = as_matrix(P)
    if P.size != 2:
        raise AlphabetError("Markov Haar bases need a 2 × 2 stochastic matrix")
    return P


def _split(word: Word, depth: int, low: float, high: float) -> CylinderFunction:
    """low·1_[word 0] + high·1_[word 1] stored at the given depth."""
    check_depth(2, depth)
    return (
        low * CylinderFunction.indicator(word.append(0), depth)
        + high * CylinderFunction.indicator(word.append(1), depth)
    )


def markov_haar_e(
    P: StochasticMatrix | np.ndarray, x: Word | Sequence[int]
) -> CylinderFunction:
    """
    Markov Haar function e_[x] on [x0] ∪ [x1].

    Args:
        P (StochasticMatrix | np.ndarray): Binary chain
        x (Word | Sequence[int]): Word of length n >= 1

    Returns:
        CylinderFunction: Zero-mean, unit L²(μ) function of depth n + 1
    """
    P, x = _binary_chain(P), _binary_word(x)
    pi = stationary_vector(P)
    transitions = [P.matrix[a, b] for a, b in zip(x.symbols, x.symbols[1:])]
    mass = pi[x[0]] * np.prod(transitions)
    p0, p1 = P.matrix[x.last]
    scale = 1.0 / np.sqrt(mass)
    return _split(x, len(x) + 1, scale * np.sqrt(p1 / p0), -scale * np.sqrt(p0 / p1))


def _kernel_weights(P: StochasticMatrix, first: int) -> tuple[float, float]:
    pi = stationary_vector(P)
    return (
        np.sqrt(pi[first]) / (np.sqrt(pi[0]) * np.sqrt(P.matrix[0, first])),
        np.sqrt(pi[first]) / (np.sqrt(pi[1]) * np.sqrt(P.matrix[1, first])),
    )


def markov_kernel_a(
    P: StochasticMatrix | np.ndarray, x: Word | Sequence[int]
) -> CylinderFunction:
    """
    Kernel element a_x = w₀·e_[0x] - w₁·e_[1x] of the Markov transfer operator.

    Args:
        P (StochasticMatrix | np.ndarray): Binary chain
        x (Word | Sequence[int]): Word of length n >= 1

    Returns:
        CylinderFunction: Function of depth n + 2 with ℒ a_x = 0
    """
    P, x = _binary_chain(P), _binary_word(x)
    w0, w1 = _kernel_weights(P, x[0])
    return w0 * markov_haar_e(P, x.prepend(0)) - w1 * markov_haar_e(P, x.prepend(1))


def markov_kernel_b(
    P: StochasticMatrix | np.ndarray, x: Word | Sequence[int]
) -> CylinderFunction:
    """b_x = √μ[x0]·a_x, uniformly bounded in C⁰."""
    P, x = _binary_chain(P), _binary_word(x)
    pi = stationary_vector(P)
    path = x.symbols + (0,)
    mass = pi[path[0]] * np.prod([P.matrix[a, b] for a, b in zip(path, path[1:])])
    return np.sqrt(mass) * markov_kernel_a(P, x)


def _normalized(f: CylinderFunction, mu: CylinderMeasure) -> CylinderFunction:
    return f / np.sqrt(integrate(f * f, mu))


def markov_gamma(P: StochasticMatrix | np.ndarray, n: int) -> CylinderFunction:
    """
    Fourier-like kernel element γ_n = Σ_{|x| = n} b_x, L²-normalized.

    Args:
        P (StochasticMatrix | np.ndarray): Binary chain
        n (int): Generation n >= 1

    Returns:
        CylinderFunction: Unit-norm kernel element of depth n + 2
    """
    P = _binary_chain(P)
    if n < 1:
        raise DepthError("γ_n is defined for n >= 1")
    check_depth(2, n + 2)
    gamma = sum(markov_kernel_b(P, x) for x in all_words(n))
    return _normalized(gamma, gibbs_measure(jacobian_potential(P), n + 2))


def _measure_for(mu: CylinderMeasure | Potential, depth: int) -> CylinderMeasure:
    if isinstance(mu, CylinderMeasure):
        if mu.alphabet_size != 2:
            raise AlphabetError("Haar constructions are defined on the binary shift")
        if mu.depth < depth:
            raise DepthError(
                f"measure of depth {mu.depth} cannot resolve depth {depth}"
            )
        return mu.coarsen(depth)
    J = require_normalized(mu)
    if J.alphabet_size != 2:
        raise AlphabetError("Haar constructions are defined on the binary shift")
    return gibbs_measure(J, depth)


def _haar_c(mu: CylinderMeasure) -> np.ndarray:
    """Σ_x c_[x] at depth(mu): √(μ[x1]/μ[x0]) on [x0], -√(μ[x0]/μ[x1]) on [x1]."""
    m0, m1 = mu.weights.reshape(-1, 2).T
    return np.column_stack([np.sqrt(m1 / m0), -np.sqrt(m0 / m1)]).ravel()


def gibbs_haar_e(
    mu: CylinderMeasure | Potential, x: Word | Sequence[int]
) -> CylinderFunction:
    """
    Haar function e_x of a general binary Gibbs measure.

    Args:
        mu (CylinderMeasure | Potential): Measure of depth >= n + 1, or its Jacobian
        x (Word | Sequence[int]): Word of length n >= 1

    Returns:
        CylinderFunction: Zero-mean, unit-norm function of depth n + 1
    """
    x = _binary_word(x)
    m = _measure_for(mu, len(x) + 1)
    m0, m1 = m.mass(x.append(0)), m.mass(x.append(1))
    scale = 1.0 / np.sqrt(m0 + m1)
    return _split(x, len(x) + 1, scale * np.sqrt(m1 / m0), -scale * np.sqrt(m0 / m1))


def gibbs_rho(mu: CylinderMeasure | Potential, n: int) -> CylinderFunction:
    """
    ρ_n = Σ_{|x| = n} √μ[x]·e_x, which already has unit L²(μ) norm.

    Args:
        mu (CylinderMeasure | Potential): Measure of depth >= n + 1, or its Jacobian
        n (int): Generation n >= 1

    Returns:
        CylinderFunction: Function of depth n + 1
    """
    if n < 1:
        raise DepthError("ρ_n is defined for n >= 1")
    return CylinderFunction(2, n + 1, _haar_c(_measure_for(mu, n + 1)))


def kernel_frak_a(
    J: Potential | CylinderFunction, x: Word | Sequence[int]
) -> CylinderFunction:
    """
    Kernel element 𝔞_x: c_[0x] on [0], its mirrored transfer on [1].

    Args:
        J (Potential | CylinderFunction): Normalized binary log-Jacobian
        x (Word | Sequence[int]): Word of length n >= 0

    Returns:
        CylinderFunction: Element of the kernel of ℒ_{log J}
    """
    J = require_normalized(J)
    x = x if isinstance(x, Word) else Word(tuple(x))
    head = x.prepend(0)
    m = _measure_for(J, len(head) + 1)
    m0, m1 = m.mass(head.append(0)), m.mass(head.append(1))
    c = _split(head, len(head) + 1, np.sqrt(m1 / m0), -np.sqrt(m0 / m1))
    return transfer_project(J, c).function


def kernel_rho_hat(J: Potential | CylinderFunction, n: int) -> CylinderFunction:
    """
    ρ̂_n = Σ_{|x| = n} 𝔞_x, L²-normalized.

    Args:
        J (Potential | CylinderFunction): Normalized binary log-Jacobian
        n (int): Generation n >= 1

    Returns:
        CylinderFunction: Unit-norm kernel element
    """
    J = require_normalized(J)
    if n < 1:
        raise DepthError("ρ̂_n is defined for n >= 1")
    m = _measure_for(J, n + 2)
    head = CylinderFunction(2, n + 2, _haar_c(m)).restrict(0)
    rho = transfer_project(J, head).function
    return _normalized(rho, gibbs_measure(J, max(rho.depth, J.depth - 1)))


def maxent_alpha(n: int) -> CylinderFunction:
    """α_n = +1 on cylinders ending in 0, -1 on those ending in 1 (n >= 2)."""
    if n < 2:
        raise DepthError("α_n is defined for n >= 2")
    check_depth(2, n)
    return CylinderFunction(2, n, 1.0 - 2.0 * digits(n)[:, -1])


def maxent_beta(n: int) -> CylinderFunction:
    """β_n = α_n on [0] and -α_n∘𝔖 on [1]; β₁ = 1_[0] - 1_[1]."""
    if n < 1:
        raise DepthError("β_n is defined for n >= 1")
    if n == 1:
        return CylinderFunction(2, 1, [1.0, -1.0])
    alpha = maxent_alpha(n)
    return alpha.restrict(0) - mirror_apply(alpha).restrict(1)


def _base_for(kind: str, P, J) -> Potential:
    if kind.startswith("maxent"):
        return MAXENT
    if kind.startswith("markov"):
        if P is None:
            raise ConfigError(f"basis kind '{kind}' needs a stochastic matrix")
        return jacobian_potential(_binary_chain(P))
    if J is None:
        if P is None:
            raise ConfigError(f"basis kind '{kind}' needs a Jacobian or a matrix")
        return jacobian_potential(_binary_chain(P))
    return require_normalized(J)


def build_family(
    kind: str,
    n_max: int,
    P: StochasticMatrix | np.ndarray | None = None,
    J: Potential | CylinderFunction | None = None,
) -> BasisFamily:
    """
    Materialize the prefix of a basis family up to generation n_max.

    Word-indexed kinds take every word of length 1..n_max; aggregated kinds
    take n = 1..n_max (n = 2..n_max for maxent-alpha).

    Args:
        kind (str): One of BASIS_KINDS
        n_max (int): Largest generation
        P (StochasticMatrix | np.ndarray | None): Binary chain for Markov kinds
        J (Potential | CylinderFunction | None): Jacobian for Gibbs and kernel kinds

    Returns:
        BasisFamily: Elements with a measure deep enough to integrate all of them
    """
    if kind not in BASIS_KINDS:
        raise ConfigError(f"unknown basis kind '{kind}'")
    base = _base_for(kind, P, J)
    words = [x for n in range(1, n_max + 1) for x in all_words(n)]

    if kind == "markov-e":
        elements = [(str(x), markov_haar_e(P, x)) for x in words]
    elif kind == "markov-a":
        elements = [(str(x), markov_kernel_a(P, x)) for x in words]
    elif kind == "markov-b":
        elements = [(str(x), markov_kernel_b(P, x)) for x in words]
    elif kind == "markov-gamma":
        elements = [(f"gamma_{n}", markov_gamma(P, n)) for n in range(1, n_max + 1)]
    elif kind == "gibbs-e":
        mu = gibbs_measure(base, n_max + 1)
        elements = [(str(x), gibbs_haar_e(mu, x)) for x in words]
    elif kind == "gibbs-rho":
        mu = gibbs_measure(base, n_max + 1)
        elements = [(f"rho_{n}", gibbs_rho(mu, n)) for n in range(1, n_max + 1)]
    elif kind == "kernel-frak-a":
        elements = [(str(x), kernel_frak_a(base, x)) for x in words]
    elif kind == "kernel-rho-hat":
        elements = [
            (f"rho_hat_{n}", kernel_rho_hat(base, n)) for n in range(1, n_max + 1)
        ]
    elif kind == "maxent-alpha":
        elements = [(f"alpha_{n}", maxent_alpha(n)) for n in range(2, n_max + 1)]
    else:
        elements = [(f"beta_{n}", maxent_beta(n)) for n in range(1, n_max + 1)]

    depth = max(max(f.depth for _, f in elements), base.depth - 1)
    logger.info("built %s family: %d elements, depth %d", kind, len(elements), depth)
    return BasisFamily(
        kind=kind,
        elements=tuple(BasisElement(label, f) for label, f in elements),
        measure=gibbs_measure(base, depth),
        base=base,
    )


def _value_matrix(functions: Sequence[CylinderFunction], depth: int) -> np.ndarray:
    return np.vstack([f.refine(depth).values for f in functions])


def gram_matrix(family: BasisFamily, mu: CylinderMeasure | None = None) -> np.ndarray:
    """G[i, j] = ∫ f_i f_j dμ."""
    mu = family.measure if mu is None else mu
    V = _value_matrix(family.functions, mu.depth)
    return (V * mu.weights) @ V.T


def kernel_residuals(
    family: BasisFamily, A: Potential | CylinderFunction | None = None
) -> np.ndarray:
    """sup |ℒ_A f| per element, with A the family base by default."""
    A = require_normalized(family.base if A is None else A)
    return np.array([apply_ruelle(A, f).sup_norm() for f in family.functions])


def bounds_report(
    family: BasisFamily, mu: CylinderMeasure | None = None
) -> BoundsReport:
    """
    Uniform C⁰ and L² bounds over the materialized prefix.

    Args:
        family (BasisFamily): Materialized family
        mu (CylinderMeasure | None): Measure for the L² norms

    Returns:
        BoundsReport: Per-element norms with their minima and maxima
    """
    mu = family.measure if mu is None else mu
    c0 = tuple(f.sup_norm() for f in family.functions)
    l2 = tuple(float(np.sqrt(integrate(f * f, mu))) for f in family.functions)
    inf_abs = tuple(float(np.min(np.abs(f.values))) for f in family.functions)
    return BoundsReport(
        c0_norms=c0,
        l2_norms=l2,
        inf_abs=inf_abs,
        alpha_c0=min(c0),
        beta_c0=max(c0),
        alpha_l2=min(l2),
        beta_l2=max(l2),
        alpha_pointwise=min(inf_abs),
    )


def generation_defect(
    functions: Sequence[CylinderFunction], target_depth: int = 3, space_depth: int = 5
) -> float:
    """
    Distance of depth-target cylinder indicators from the algebra of a family.

    The algebra generated by finitely many cylinder functions consists of the
    functions constant on their joint level sets; each indicator is replaced
    by its least-squares fit in that space.

    Args:
        functions (Sequence[CylinderFunction]): Family prefix
        target_depth (int): Depth of the indicators to reproduce
        space_depth (int): Depth of the ambient space

    Returns:
        float: Largest sup-norm residual over all target indicators
    """
    usable = [f for f in functions if f.depth <= space_depth]
    if not usable:
        raise DepthError(f"no family element fits in depth {space_depth}")
    V = np.round(_value_matrix(usable, space_depth).T, LEVEL_DECIMALS)
    _, cells = np.unique(V, axis=0, return_inverse=True)
    cells = cells.ravel()
    sizes = np.bincount(cells)
    worst = 0.0
    for word in all_words(target_depth):
        target = CylinderFunction.indicator(word, space_depth).values
        fit = (np.bincount(cells, weights=target) / sizes)[cells]
        worst = max(worst, float(np.max(np.abs(target - fit))))
    return worst


def bowen_ratio_check(
    J: Potential | CylinderFunction, depths: Sequence[int]
) -> list[BowenRatios]:
    """
    Bowen constants μ[x]/Π_{j<n} J(σʲy) and sibling ratios μ[x0]/μ[x1].

    y is the lexicographically smallest point x000... of the cylinder.

    Args:
        J (Potential | CylinderFunction): Normalized binary log-Jacobian
        depths (Sequence[int]): Cylinder lengths n

    Returns:
        list[BowenRatios]: One record per depth
    """
    J = require_normalized(J)
    if J.alphabet_size != 2:
        raise AlphabetError("Bowen ratios are computed on the binary shift")
    p = max(J.depth, 1)
    log_j = J.function.refine(p).values
    powers = 2 ** np.arange(p - 1, -1, -1)
    records = []
    for n in depths:
        check_depth(2, n + 1)
        padded = np.hstack([digits(n), np.zeros((2**n, p), dtype=int)])
        birkhoff = sum(log_j[padded[:, j : j + p] @ powers] for j in range(n))
        mu = gibbs_measure(J, n + 1)
        bowen = mu.coarsen(n).weights / np.exp(birkhoff)
        siblings = mu.weights[0::2] / mu.weights[1::2]
        records.append(
            BowenRatios(
                depth=n,
                k1=float(np.min(bowen)),
                k2=float(np.max(bowen)),
                ratio_min=float(np.min(siblings)),
                ratio_max=float(np.max(siblings)),
            )
        )
    return records


def change_of_variables_check(
    J: Potential | CylinderFunction, f: CylinderFunction
) -> dict[str, tuple[float, float]]:
    """
    Jacobian change-of-variables identities for f.

    "branch_0": ∫_[0] f dμ = ∫ f(τ₀)J(τ₀) dμ; "branch_1" is the [1] analogue;
    "mirror": ∫_[0] f dμ = ∫_[1] J(𝔖)f(𝔖)/J dμ.

    Args:
        J (Potential | CylinderFunction): Normalized binary log-Jacobian
        f (CylinderFunction): Test function

    Returns:
        dict[str, tuple[float, float]]: (lhs, rhs) per identity
    """
    J = require_normalized(J)
    if J.alphabet_size != 2 or f.alphabet_size != 2:
        raise AlphabetError("the mirrored identity needs the binary shift")
    k = max(f.depth, J.depth, 1)
    phi = f.refine(k)
    jac = J.function.refine(k).exp()
    mu = gibbs_measure(J, k)

    pairs = {}
    for a in (0, 1):
        pairs[f"branch_{a}"] = (
            integrate(phi.restrict(a), mu),
            integrate(compose_branch(phi, a) * compose_branch(jac, a), mu),
        )
    pairs["mirror"] = (
        integrate(phi.restrict(0), mu),
        integrate((mirror_apply(jac * phi) / jac).restrict(1), mu),
    )
    return pairs
