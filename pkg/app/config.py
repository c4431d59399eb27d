import logging
import os

# Engine configuration with environment variable support
DEPTH_CAP = int(os.getenv("GIBBS_DEPTH_CAP", "12"))
MAX_CELLS = int(os.getenv("GIBBS_MAX_CELLS", str(2**24)))
WORKING_DEPTH = int(os.getenv("GIBBS_WORKING_DEPTH", "8"))

# Numerical tolerances
EIGEN_TOL = float(os.getenv("GIBBS_EIGEN_TOL", "1e-13"))
EIGEN_MAX_ITER = int(os.getenv("GIBBS_EIGEN_MAX_ITER", "100000"))
NORM_TOL = float(os.getenv("GIBBS_NORM_TOL", "1e-10"))
KERNEL_TOL = float(os.getenv("GIBBS_KERNEL_TOL", "1e-10"))
MEASURE_TOL = float(os.getenv("GIBBS_MEASURE_TOL", "1e-12"))

# Finite-difference steps
PI_STEP = 1e-5
METRIC_STEP = 1e-4
ORACLE_STEPS = (1e-3, 1e-4)

# Interior margin of the (r, s) square
DOMAIN_MARGIN = 1e-6

LOG_LEVEL = os.getenv("GIBBS_LOG_LEVEL", "WARNING")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | None = None) -> None:
    """
    Install a single stream handler on the root logger.

    Args:
        level (str | None): Level name, defaults to GIBBS_LOG_LEVEL

    Returns:
        None
    """
    logging.basicConfig(
        level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT, force=True
    )


def tolerances() -> dict:
    """Tolerances embedded in every run report."""
    return {
        "eigen_tol": EIGEN_TOL,
        "norm_tol": NORM_TOL,
        "kernel_tol": KERNEL_TOL,
        "measure_tol": MEASURE_TOL,
        "pi_step": PI_STEP,
        "metric_step": METRIC_STEP,
        "oracle_steps": list(ORACLE_STEPS),
        "domain_margin": DOMAIN_MARGIN,
    }
