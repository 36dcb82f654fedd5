"""
Convergence study with the manufactured solution: errors at t = T for a sweep
over (gamma, C1, beta, nu, N) with dt = 1/N, observed rates between successive
meshes and least-squares fitted orders.

Outputs
-------
results/tables/tbl_convergence.csv
results/tables/tbl_convergence_fits.csv
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.analysis.errors import NORMS, compute_errors
from src.analysis.timestepping import run_transient
from src.discretization.params import ModelParams
from src.utils.config import results_dir

logger = logging.getLogger(__name__)

GROUP_KEYS = ["gamma", "C1", "beta", "nu"]
FLOAT_FORMAT = "%.5e"

# Accepted observed-rate windows for first-order displacement / pressure spaces.
RATE_BOUNDS = {
    "u_energy": (0.9, 1.1),
    "u_h1": (0.9, 1.1),
    "u_l2": (1.8, 2.1),
    "p_h1": (0.9, 1.1),
    "p_l2": (1.8, 2.1),
}


def _linear_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    x_mean = float(np.mean(x))
    slope, intercept_centered = np.polyfit(x - x_mean, y, 1)
    intercept = float(intercept_centered - slope * x_mean)
    y_pred = intercept + slope * x
    sse = float(np.sum((y - y_pred) ** 2))
    sst = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else math.nan
    return intercept, float(slope), r2


def observed_rates(N: Sequence[int], errors: Sequence[float]) -> List[float]:
    """log(e_{k-1}/e_k) / log(N_k/N_{k-1}); the first entry is NaN."""
    rates = [math.nan]
    for k in range(1, len(N)):
        e0, e1 = errors[k - 1], errors[k]
        if e0 > 0.0 and e1 > 0.0:
            rates.append(math.log(e0 / e1) / math.log(N[k] / N[k - 1]))
        else:
            rates.append(math.nan)
    return rates


@dataclass
class ConvergenceRun:
    gamma: float
    C1: float
    beta: float
    nu: float
    N: int
    dt: float
    errors: dict
    zero_norm: bool


def run_case(
    template: ModelParams, N: int, rtol: float = 1e-8, maxit: int = 1000, dt: Optional[float] = None
) -> ConvergenceRun:
    params = template.with_overrides(dt=dt if dt is not None else 1.0 / N)
    run = run_transient(params, N, rtol=rtol, maxit=maxit)
    errors = compute_errors(run.final, run.exact, run.problem.dofs, run.problem.params)
    logger.info(
        "converge beta=%g nu=%g N=%d: energy error %.4e, p L2 error %.4e",
        params.beta, params.nu, N, errors.u_energy, errors.p_l2,
    )
    return ConvergenceRun(
        gamma=params.gamma,
        C1=params.C1,
        beta=params.beta,
        nu=params.nu,
        N=N,
        dt=run.problem.params.dt,
        errors={name: getattr(errors, name) for name in NORMS},
        zero_norm=errors.zero_norm,
    )


def convergence_study(
    template: ModelParams,
    N_list: Iterable[int],
    beta_list: Iterable[float],
    nu_list: Iterable[float],
    gamma_list: Optional[Iterable[float]] = None,
    C1_list: Optional[Iterable[float]] = None,
    rtol: float = 1e-8,
    maxit: int = 1000,
    dt: Optional[float] = None,
) -> pd.DataFrame:
    """
    Run every configuration and return the error table with rates.

    Columns: beta, nu, N, dt, then err_<norm>, rate_<norm> for the five norms,
    then gamma, C1 and zero_norm. Rates are empty for the coarsest mesh of each
    series.
    """
    N_list = sorted(int(n) for n in N_list)
    gamma_list = list(gamma_list) if gamma_list else [template.gamma]
    C1_list = list(C1_list) if C1_list else [template.C1]
    records = []
    for gamma in gamma_list:
        for C1 in C1_list:
            for beta in beta_list:
                for nu in nu_list:
                    params = template.with_overrides(gamma=gamma, C1=C1, beta=beta, nu=nu)
                    for N in N_list:
                        run = run_case(params, N, rtol=rtol, maxit=maxit, dt=dt)
                        record = {
                            "gamma": run.gamma,
                            "C1": run.C1,
                            "beta": run.beta,
                            "nu": run.nu,
                            "N": run.N,
                            "dt": run.dt,
                        }
                        record.update({f"err_{name}": run.errors[name] for name in NORMS})
                        record["zero_norm"] = run.zero_norm
                        records.append(record)
    return add_rates(pd.DataFrame.from_records(records))


def add_rates(table: pd.DataFrame) -> pd.DataFrame:
    """Insert a rate_<norm> column after each err_<norm> column."""
    table = table.sort_values(GROUP_KEYS + ["N"]).reset_index(drop=True)
    for name in NORMS:
        table[f"rate_{name}"] = math.nan
        for _, group in table.groupby(GROUP_KEYS, sort=False):
            rates = observed_rates(group["N"].tolist(), group[f"err_{name}"].tolist())
            table.loc[group.index, f"rate_{name}"] = rates
    columns = ["beta", "nu", "N", "dt"]
    for name in NORMS:
        columns += [f"err_{name}", f"rate_{name}"]
    return table[columns + ["gamma", "C1", "zero_norm"]]


def fitted_orders(table: pd.DataFrame) -> pd.DataFrame:
    """Least-squares slope of log(error) against log(1/N) for each series and norm."""
    rows = []
    for key, group in table.groupby(GROUP_KEYS, sort=True):
        for name in NORMS:
            errors = group[f"err_{name}"].to_numpy(dtype=float)
            ok = errors > 0.0
            if ok.sum() < 2:
                continue
            h = 1.0 / group["N"].to_numpy(dtype=float)[ok]
            intercept, slope, r2 = _linear_fit(np.log(h), np.log(errors[ok]))
            rows.append(
                dict(zip(GROUP_KEYS, key))
                | {
                    "norm": name,
                    "n_points": int(ok.sum()),
                    "fitted_order": slope,
                    "intercept": intercept,
                    "r2": r2,
                }
            )
    return pd.DataFrame(
        rows, columns=GROUP_KEYS + ["norm", "n_points", "fitted_order", "intercept", "r2"]
    )


def rate_violations(table: pd.DataFrame) -> List[str]:
    """Observed rates outside RATE_BOUNDS, one message per offending entry."""
    violations = []
    for _, row in table.iterrows():
        for name, (low, high) in RATE_BOUNDS.items():
            rate = row[f"rate_{name}"]
            if pd.isna(rate):
                continue
            if not low <= rate <= high:
                violations.append(
                    f"beta={row['beta']:g} nu={row['nu']:g} gamma={row['gamma']:g} "
                    f"C1={row['C1']:g} N={int(row['N'])}: rate_{name}={rate:.3f} "
                    f"outside [{low}, {high}]"
                )
    return violations


def write_tables(table: pd.DataFrame, out_dir: Path) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "tbl_convergence.csv"
    fits_path = out_dir / "tbl_convergence_fits.csv"
    table.to_csv(table_path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    fitted_orders(table).to_csv(fits_path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    logger.info("wrote %s and %s", table_path, fits_path)
    return table_path, fits_path


def main() -> None:
    logging.basicConfig(level=logging.INFO)
    table = convergence_study(ModelParams(), [8, 16, 32, 64], [1.0, 2.0], [0.3, 0.499])
    write_tables(table, results_dir())


if __name__ == "__main__":
    main()
