from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from app.models.pydantic import RunReport
from app.models.schema import BasisFamily, GeodesicPath
from app.symbolic import all_words, integrate

# 17 significant digits round-trip every double
FLOAT_FORMAT = "%.17g"


def path_frame(path: GeodesicPath) -> pd.DataFrame:
    data = np.column_stack([path.times, path.states, path.energy])
    return pd.DataFrame(data, columns=list(path.columns))


def write_path_csv(path: GeodesicPath, target: str | Path) -> Path:
    """
    Write a geodesic path as CSV.

    Args:
        path (GeodesicPath): Sampled path
        target (str | Path): Output file

    Returns:
        Path: The written file
    """
    target = Path(target)
    path_frame(path).to_csv(target, index=False, float_format=FLOAT_FORMAT)
    return target


def basis_frame(
    family: BasisFamily, residuals: Sequence[float] | None = None
) -> pd.DataFrame:
    """
    One row per element: label, own depth, norms, kernel residual, then values.

    Values are listed on the cylinders of the family measure so every row has
    the same width; residuals are left empty for families outside a kernel.

    Args:
        family (BasisFamily): Materialized family
        residuals (Sequence[float] | None): sup |ℒf| per element

    Returns:
        pd.DataFrame: The dump
    """
    mu = family.measure
    words = [str(w) for w in all_words(mu.depth, mu.alphabet_size)]
    values = np.vstack([f.refine(mu.depth).values for f in family.functions])
    frame = pd.DataFrame(values, columns=words)
    frame.insert(0, "label", [e.label for e in family.elements])
    frame.insert(1, "depth", [f.depth for f in family.functions])
    frame.insert(2, "c0_norm", [f.sup_norm() for f in family.functions])
    l2 = [np.sqrt(integrate(f * f, mu)) for f in family.functions]
    frame.insert(3, "l2_norm", l2)
    if residuals is not None:
        residuals = np.asarray(residuals, float)
    frame.insert(4, "kernel_residual", np.nan if residuals is None else residuals)
    return frame


def write_basis_csv(
    family: BasisFamily, target: str | Path, residuals: Sequence[float] | None = None
) -> Path:
    target = Path(target)
    frame = basis_frame(family, residuals)
    frame.to_csv(target, index=False, float_format=FLOAT_FORMAT)
    return target


def write_report(report: RunReport, target: str | Path) -> Path:
    """
    Write a run report as indented JSON.

    Args:
        report (RunReport): Report model
        target (str | Path): Output file

    Returns:
        Path: The written file
    """
    target = Path(target)
    target.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return target
