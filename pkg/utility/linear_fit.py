from typing import Sequence

import numpy as np
from scipy.stats import linregress


def geometric_rate(values: Sequence[float], skip: int = 1) -> float:
    """
    Fit |c_n| ≈ C·ρⁿ by linear regression of log|c_n| on n.

    Args:
        values (Sequence[float]): Decaying sequence c_1, c_2, ...
        skip (int): Leading terms left out of the fit

    Returns:
        float: Estimated decay rate ρ
    """
    magnitudes = np.abs(np.asarray(values, dtype=float))[skip:]
    n = np.arange(magnitudes.size)
    # Terms at round-off level carry no slope information
    mask = magnitudes > 1e-300
    if mask.sum() < 2:
        return 0.0
    slope, _, _, _, _ = linregress(n[mask], np.log(magnitudes[mask]))
    return float(np.exp(slope))


def convergence_order(steps: Sequence[float], errors: Sequence[float]) -> float:
    """
    Fit error ≈ C·h^p on a log-log scale.

    Args:
        steps (Sequence[float]): Step sizes h
        errors (Sequence[float]): Matching error measurements

    Returns:
        float: Fitted order p
    """
    slope, _, _, _, _ = linregress(
        np.log(np.asarray(steps, dtype=float)), np.log(np.asarray(errors, dtype=float))
    )
    return float(slope)
