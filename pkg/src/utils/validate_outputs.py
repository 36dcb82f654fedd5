"""Validate generated study tables for expected files, columns and values."""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import pandas as pd

from src.analysis.errors import NORMS
from src.utils.config import results_dir


def _error_columns() -> list[str]:
    columns = ["beta", "nu", "N", "dt"]
    for name in NORMS:
        columns += [f"err_{name}", f"rate_{name}"]
    return columns


REQUIRED_COLUMNS = {
    "tbl_convergence.csv": _error_columns() + ["gamma", "C1", "zero_norm"],
    "tbl_convergence_fits.csv": ["gamma", "C1", "beta", "nu", "norm", "fitted_order", "r2"],
    "tbl_preconditioning.csv": [
        "beta",
        "dt",
        "nu",
        "N",
        "dofs",
        "iters_first",
        "iters_max",
        "iters_mean",
        "converged",
        "oracle_diff",
        "reference_iters",
    ],
    "tbl_preconditioning_summary.csv": [
        "beta",
        "dt",
        "nu",
        "iters_min",
        "iters_max",
        "ratio",
        "min_growth",
        "trend_ok",
    ],
    "tbl_infsup.csv": ["beta", "dt", "nu", "N", "min_abs_eig", "max_abs_eig", "condition"],
}

# Columns that must be strictly positive wherever present.
POSITIVE_COLUMNS = {
    "tbl_convergence.csv": ["N", "dt"],
    "tbl_preconditioning.csv": ["N", "dofs", "iters_first"],
    "tbl_infsup.csv": ["min_abs_eig"],
}


def _check_csv(path: Path, required_columns: list[str], positive: Optional[list[str]] = None) -> list[str]:
    """Check that a CSV exists, is non-empty, and has required columns."""
    errors = []
    if not path.exists():
        errors.append(f"Missing output: {path}")
        return errors
    if path.stat().st_size == 0:
        errors.append(f"Empty output: {path}")
        return errors
    df = pd.read_csv(path)
    missing = [col for col in required_columns if col not in df.columns]
    if missing:
        errors.append(f"Missing columns in {path}: {', '.join(missing)}")
    if df.empty:
        errors.append(f"No rows in {path}")
    for col in positive or []:
        if col in df.columns and (df[col].dropna() <= 0).any():
            errors.append(f"Non-positive values in {path}:{col}")
    return errors


def validate(out_dir: Path, only_present: bool = False) -> list[str]:
    """
    Errors for every expected table under ``out_dir``.

    With ``only_present`` tables that were not produced are skipped, so a
    single study's output can be validated on its own.
    """
    errors: list[str] = []
    for name, columns in REQUIRED_COLUMNS.items():
        path = Path(out_dir) / name
        if only_present and not path.exists():
            continue
        errors.extend(_check_csv(path, columns, POSITIVE_COLUMNS.get(name)))
    return errors


def main() -> None:
    """Run output validation checks."""
    errors = validate(results_dir())
    if errors:
        for error in errors:
            print(error)
        raise SystemExit(1)
    print("All outputs validated.")


if __name__ == "__main__":
    main()
