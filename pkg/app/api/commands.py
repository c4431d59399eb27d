import logging
from pathlib import Path

import numpy as np

from .. import config as settings
from ..divergence import (
    CERTIFICATE_TOL,
    ORACLE_ATOL,
    ORACLE_RTOL,
    bernoulli_identity,
    defects,
    project_simplex,
)
from ..errors import ConfigError, ConvergenceError, DomainError
from ..geodesics import (
    BOUNDARY_ZONE,
    ENERGY_TOL,
    H_MIN,
    LOCAL_TOL,
    chart_fan,
    chart_to_markov,
    christoffel_consistency,
    fan_angles,
    markov_fan,
    non_straightness,
)
from ..haar import build_family, gram_matrix, kernel_residuals
from ..markov import jacobian_potential
from ..models.pydantic import JobConfig, RunReport
from ..models.schema import GeodesicState, Potential, SimplexProblem, StochasticMatrix
from ..symbolic import CylinderFunction
from ..transfer import normalize
from utility import export
from utility.preprocess import config_hash

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"

# Gram and kernel residual tolerance of cmd_basis
BASIS_TOL = 1e-10

# Orthogonal but not unit-norm families
UNNORMALIZED_KINDS = ("markov-a", "markov-b", "kernel-frak-a")
KERNEL_KINDS = (
    "markov-a",
    "markov-b",
    "markov-gamma",
    "kernel-frak-a",
    "kernel-rho-hat",
    "maxent-beta",
)

# Agreement required between derivative, defect and closed form of a Bernoulli triple
BERNOULLI_TOL = 1e-12


def _binary_only(job: JobConfig) -> None:
    if job.alphabet_size != 2:
        raise ConfigError(f"command '{job.command}' needs alphabet_size 2")


def _chain(matrix, alphabet_size: int) -> StochasticMatrix:
    P = StochasticMatrix(np.asarray(matrix, dtype=float))
    if P.size != alphabet_size:
        raise ConfigError(
            f"matrix of size {P.size} does not match alphabet_size {alphabet_size}"
        )
    return P


def _raw_potential(values: list[float]) -> Potential:
    """Normalized potential from 2^p raw binary values."""
    p = int(round(np.log2(len(values)))) if values else -1
    if p < 0 or 2**p != len(values):
        raise ConfigError(f"potential needs 2^p values, got {len(values)}")
    return normalize(CylinderFunction(2, p, values))


def _report(
    job: JobConfig,
    out: Path,
    results: dict,
    extra_tolerances: dict,
    checks: dict,
    artifacts: list[str],
) -> RunReport:
    report = RunReport(
        command=job.command,
        config_hash=config_hash(job),
        config=job.model_dump(mode="json"),
        results=results,
        tolerances={**settings.tolerances(), **extra_tolerances},
        checks=checks,
        artifacts=artifacts + [REPORT_NAME],
    )
    target = export.write_report(report, out / REPORT_NAME)
    logger.info("wrote %s", target)
    return report


def cmd_geodesic(job: JobConfig, out: Path) -> RunReport:
    """
    ## Geodesic Fan

    Integrate a fan of geodesics from one start point and write one CSV per path.

    ### Modes
    - **markov**: closed-form connection on the (r, s) surface, columns t, r, s,
      dr, ds, energy
    - **submanifold**: numerical chart over the start chain, chart coordinates
      and velocities

    The report lists, per path, its angle, stop reason, non-straightness,
    energy drift and end point in (r, s), plus the Christoffel consistency
    check at the start.
    """
    _binary_only(job)
    spec = job.geodesic
    try:
        GeodesicState(*spec.start, 0.0, 0.0)
    except DomainError as e:
        raise ConfigError(f"start point: {e}") from e
    if spec.directions is None:
        angles = fan_angles(spec.n_directions)
    else:
        angles = np.asarray(spec.directions)
    logger.info(
        "geodesic fan: %s mode, %d directions from %s",
        spec.mode,
        len(angles),
        spec.start,
    )

    if spec.mode == "markov":
        paths = markov_fan(
            spec.start,
            angles,
            t_max=spec.t_max,
            h=spec.h,
            speed=spec.speed,
            connection=spec.connection,
            unit_speed=spec.unit_speed,
            max_workers=spec.max_workers,
        )
        ends = [tuple(float(v) for v in path.positions[-1]) for path in paths]
    else:
        chart, paths = chart_fan(
            spec.start,
            angles,
            T=spec.t_max,
            h=spec.h,
            speed=spec.speed,
            bound=spec.chart_bound,
            max_workers=spec.max_workers,
        )
        ends = [chart_to_markov(chart, path.positions[-1]) for path in paths]

    artifacts = []
    rows = []
    for i, (angle, path, end) in enumerate(zip(angles, paths, ends)):
        name = f"geodesic_{i:02d}.csv"
        export.write_path_csv(path, out / name)
        artifacts.append(name)
        rows.append(
            {
                "file": name,
                "angle": float(angle),
                "reason": path.reason,
                "samples": int(len(path.times)),
                "t_end": float(path.times[-1]),
                "non_straightness": non_straightness(path),
                "energy_drift": float(path.energy_drift),
                "end": [float(end[0]), float(end[1])],
            }
        )
    logger.info("wrote %d path files to %s", len(artifacts), out)

    consistency = christoffel_consistency(*spec.start)
    results = {
        "mode": spec.mode,
        "connection": spec.connection if spec.mode == "markov" else "chart",
        "paths": rows,
        "christoffel": {
            "stated": [float(v) for v in consistency.theorem],
            "metric": [
                float(consistency.closed_form[0, 0, 0]),
                float(consistency.closed_form[1, 1, 1]),
            ],
            "max_discrepancy": float(consistency.max_discrepancy),
            "agrees": bool(consistency.agrees),
            "sign_only": bool(consistency.sign_only),
        },
    }
    checks = {
        "paths_complete": all(len(path.times) > 1 for path in paths),
        "curved": any(row["non_straightness"] > 1e-3 for row in rows),
    }
    tolerances = {
        "local_tol": LOCAL_TOL,
        "h_min": H_MIN,
        "boundary_zone": BOUNDARY_ZONE,
        "energy_tol": ENERGY_TOL,
    }
    return _report(job, out, results, tolerances, checks, artifacts)


def cmd_divergence(job: JobConfig, out: Path) -> RunReport:
    """
    ## Divergence Report

    Divergences, family derivatives and inequality defects of three binary chains.

    A derivative that disagrees with its finite-difference oracle is a bug:
    the report is written first, then ConvergenceError is raised.
    """
    _binary_only(job)
    spec = job.divergence
    chains = [_chain(m, job.alphabet_size) for m in spec.matrices]
    J0, J1, J2 = (jacobian_potential(P) for P in chains)
    depth = job.depth or settings.WORKING_DEPTH
    logger.info("divergence report at depth %d", depth)

    report = defects(
        J0,
        J1,
        J2,
        oracle=spec.oracle,
        references=spec.references,
        reference_tol=spec.reference_tol,
        depth=depth,
    )
    checks = {"log_ratio_bound": report.log_ratio_bound.holds}
    if spec.oracle:
        checks["oracle"] = all(
            e.matches_oracle is not False for e in report.derivatives
        )
    if spec.include_bernoulli_identity:
        if any(not np.array_equal(P.matrix[0], P.matrix[1]) for P in chains):
            raise ConfigError("the Bernoulli identity needs matrices with equal rows")
        identity = bernoulli_identity(*(P.matrix[0, 0] for P in chains))
        report = report.model_copy(
            update={"bernoulli_identity": [float(v) for v in identity]}
        )
        checks["bernoulli_identity"] = bool(np.ptp(identity) <= BERNOULLI_TOL)
        checks["convexity"] = report.convexity.holds

    tolerances = {
        "depth": depth,
        "oracle_rtol": ORACLE_RTOL,
        "oracle_atol": ORACLE_ATOL,
        "reference_tol": spec.reference_tol,
    }
    run = _report(job, out, report.model_dump(mode="json"), tolerances, checks, [])
    if checks.get("oracle") is False:
        failed = [
            f"{e.family}/{e.problem}/{e.endpoint}"
            for e in report.derivatives
            if e.matches_oracle is False
        ]
        raise ConvergenceError(
            f"derivatives disagree with their oracle: {', '.join(failed)}"
        )
    return run


def cmd_basis(job: JobConfig, out: Path) -> RunReport:
    """
    ## Basis Family

    Materialize a basis family, dump its values per cylinder and verify it.

    ### Checks
    - **gram**: orthonormality, or orthogonality only for unnormalized kinds
    - **kernel**: ℒ-residual of every element, for kernel kinds
    """
    _binary_only(job)
    spec = job.basis
    P = None if spec.matrix is None else _chain(spec.matrix, job.alphabet_size)
    J = None if spec.potential is None else _raw_potential(spec.potential)
    family = build_family(spec.kind, spec.n_max, P=P, J=J)
    residuals = kernel_residuals(family) if spec.kind in KERNEL_KINDS else None
    export.write_basis_csv(family, out / "basis.csv", residuals)

    G = gram_matrix(family)
    off_diagonal = float(np.max(np.abs(G - np.diag(np.diag(G))))) if len(G) > 1 else 0.0
    diagonal = float(np.max(np.abs(np.diag(G) - 1.0)))
    results = {
        "kind": family.kind,
        "labels": [e.label for e in family.elements],
        "depth": family.measure.depth,
        "gram_off_diagonal": off_diagonal,
        "gram_diagonal": diagonal,
        "norms": [float(v) for v in np.sqrt(np.diag(G))],
    }
    gram_ok = off_diagonal <= BASIS_TOL
    if spec.kind not in UNNORMALIZED_KINDS:
        gram_ok = gram_ok and diagonal <= BASIS_TOL
    checks = {"gram": bool(gram_ok)}
    if residuals is not None:
        results["kernel_residuals"] = [float(v) for v in residuals]
        checks["kernel"] = bool(np.max(residuals) <= BASIS_TOL)
    if not all(checks.values()):
        logger.warning("basis %s failed checks: %s", spec.kind, checks)

    tolerances = {"gram_tol": BASIS_TOL, "depth": family.measure.depth}
    return _report(job, out, results, tolerances, checks, ["basis.csv"])


def cmd_project(job: JobConfig, out: Path) -> RunReport:
    """
    ## Information Projection

    Optimize D_KL to a target chain over the simplex spanned by vertex chains.

    A failed certificate is a finding, not an error: it is flagged in the
    report and the run still succeeds.
    """
    spec = job.project
    problem = SimplexProblem(
        vertices=tuple(
            jacobian_potential(_chain(v, job.alphabet_size)) for v in spec.vertices
        ),
        target=jacobian_potential(_chain(spec.target, job.alphabet_size)),
        mode=spec.mode,
        slot=spec.slot,
        family=spec.family,
    )
    result = project_simplex(problem, max_workers=spec.max_workers)
    certificate = result.certificate
    results = {
        "weights": [float(w) for w in result.weights],
        "value": float(result.value),
        "jacobian": [float(v) for v in result.jacobian.values],
        "vertex_values": [float(v) for v in result.vertex_values],
        "vertex_inequalities": [float(v) for v in result.vertex_inequalities],
        "starts": result.starts,
        "certificate": {
            "passed": certificate.passed,
            "directional_derivatives": list(certificate.directional_derivatives),
            "on_boundary": certificate.on_boundary,
        },
    }
    checks = {"certificate": certificate.passed}
    return _report(job, out, results, {"certificate_tol": CERTIFICATE_TOL}, checks, [])


COMMANDS = {
    "geodesic": cmd_geodesic,
    "divergence": cmd_divergence,
    "basis": cmd_basis,
    "project": cmd_project,
}
