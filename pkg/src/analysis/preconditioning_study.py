"""
MinRes iteration counts of the block-diagonal preconditioned system over
(beta, dt, nu, N), with published reference counts side by side and the
robustness trends summarized per (beta, dt, nu).

Each configuration starts from compatible initial data of the manufactured
solution and runs a fixed number of Crank-Nicolson steps; the first-step count
and the max/mean over the run are recorded.

Outputs
-------
results/tables/tbl_preconditioning.csv
results/tables/tbl_preconditioning_summary.csv
"""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.analysis.manufactured import manufactured_loads
from src.analysis.timestepping import (
    DENSE_MAX_N,
    build_problem,
    cn_rhs,
    cn_step,
    dense_oracle_check,
    initial_data,
)
from src.discretization.params import ModelParams
from src.utils.config import results_dir
from src.utils.exceptions import NotConverged, SolverError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.5e"
MESHES = (8, 16, 32, 64)
MAX_ITERS = 150
BAND = 1.25
ORACLE_TOL = 1e-6

# Published counts with multigrid sub-preconditioners, keyed (beta, dt, nu).
REFERENCE_ITERS: Dict[Tuple[float, float, float], Tuple[int, int, int, int]] = {
    (0.0, 1e-1, 0.3): (148, 195, 243, 307),
    (0.0, 1e-1, 0.499): (185, 192, 185, 163),
    (0.0, 1e-2, 0.3): (152, 210, 276, 343),
    (0.0, 1e-2, 0.499): (214, 254, 252, 231),
    (0.0, 1e-3, 0.3): (152, 218, 295, 391),
    (0.0, 1e-3, 0.499): (228, 313, 333, 336),
    (1.0, 1e-1, 0.3): (58, 57, 57, 57),
    (1.0, 1e-1, 0.499): (91, 92, 93, 98),
    (1.0, 1e-2, 0.3): (60, 60, 60, 58),
    (1.0, 1e-2, 0.499): (94, 97, 102, 102),
    (1.0, 1e-3, 0.3): (61, 62, 59, 61),
    (1.0, 1e-3, 0.499): (97, 100, 105, 106),
    (2.0, 1e-1, 0.3): (39, 36, 35, 33),
    (2.0, 1e-1, 0.499): (62, 61, 63, 62),
    (2.0, 1e-2, 0.3): (39, 38, 36, 35),
    (2.0, 1e-2, 0.499): (63, 63, 64, 64),
    (2.0, 1e-3, 0.3): (40, 39, 38, 36),
    (2.0, 1e-3, 0.499): (65, 64, 66, 65),
}


def reference_iters(beta: float, dt: float, nu: float, N: int) -> Optional[int]:
    for (b, d, n), counts in REFERENCE_ITERS.items():
        if math.isclose(b, beta) and math.isclose(d, dt) and math.isclose(n, nu) and N in MESHES:
            return counts[MESHES.index(N)]
    return None


def run_configuration(
    params: ModelParams, N: int, steps: int = 10, rtol: float = 1e-8, maxit: int = 1000
) -> dict:
    """Iteration counts of ``steps`` CN steps; a failed step counts as ``maxit``."""
    problem = build_problem(params, N)
    exact = manufactured_loads(params)
    state = initial_data(problem, exact)
    iterations: List[int] = []
    converged = True
    oracle = math.nan
    for k in range(steps):
        try:
            new_state = cn_step(problem, state, exact, rtol=rtol, maxit=maxit)
        except NotConverged:
            logger.warning(
                "beta=%g dt=%g nu=%g N=%d: step %d not converged in %d iterations",
                params.beta, params.dt, params.nu, N, k + 1, maxit,
            )
            iterations.append(maxit)
            converged = False
            break
        except SolverError as exc:
            logger.warning(
                "beta=%g dt=%g nu=%g N=%d: step %d failed: %s",
                params.beta, params.dt, params.nu, N, k + 1, exc,
            )
            iterations.append(maxit)
            converged = False
            break
        iterations.append(new_state.report.iterations)
        if k == 0 and N <= DENSE_MAX_N:
            full = cn_rhs(problem, state, exact)
            dofs = problem.dofs
            rhs = np.concatenate([full[: dofs.n_u], dofs.restrict_p(full[dofs.n_u :])])
            x = dofs.join(new_state.u_coeffs, new_state.p_coeffs)
            oracle = dense_oracle_check(problem, rhs, x)
            logger.debug("N=%d dense oracle relative difference %.3e", N, oracle)
        state = new_state
    return {
        "dofs": problem.dofs.system_size,
        "iters_first": iterations[0],
        "iters_max": max(iterations),
        "iters_mean": float(np.mean(iterations)),
        "converged": converged,
        "oracle_diff": oracle,
    }


def preconditioning_study(
    template: ModelParams,
    N_list: Iterable[int],
    beta_list: Iterable[float],
    nu_list: Iterable[float],
    dt_list: Iterable[float],
    steps: int = 10,
    rtol: float = 1e-8,
    maxit: int = 1000,
) -> pd.DataFrame:
    """One row per (beta, dt, nu, N) with the recorded iteration counts."""
    rows = []
    for beta in beta_list:
        for dt in dt_list:
            for nu in nu_list:
                params = template.with_overrides(beta=beta, dt=dt, nu=nu, T=steps * dt)
                for N in sorted(int(n) for n in N_list):
                    row = {"beta": beta, "dt": dt, "nu": nu, "N": N}
                    row.update(run_configuration(params, N, steps, rtol, maxit))
                    row["reference_iters"] = reference_iters(beta, dt, nu, N)
                    logger.info(
                        "precond beta=%g dt=%g nu=%g N=%d: first %d, max %d iterations",
                        beta, dt, nu, N, row["iters_first"], row["iters_max"],
                    )
                    rows.append(row)
    table = pd.DataFrame(rows)
    table["reference_iters"] = table["reference_iters"].astype("Int64")
    return table


def _grows(counts: pd.Series) -> bool:
    return bool(counts.is_monotonic_increasing and counts.nunique() == len(counts))


def _min_growth(counts: pd.Series) -> float:
    """Smallest ratio of consecutive counts across refinements; NaN for one mesh."""
    values = counts.to_numpy(dtype=float)
    if len(values) < 2:
        return math.nan
    return float(np.min(values[1:] / np.maximum(values[:-1], 1.0)))


def trend_summary(table: pd.DataFrame) -> pd.DataFrame:
    """
    Per (beta, dt, nu): spread of first-step counts across N and whether the
    robustness trend holds.

    Notes
    -----
    - beta >= 2: max/min <= 1.25 and max <= 150.
    - 1 <= beta < 2: max <= 150.
    - beta < 1: reported only (``trend_ok`` empty); ``monotone_growth`` tells
      whether the counts grow with N and ``min_growth`` is the smallest
      ratio between consecutive meshes.
    """
    summary = (
        table.sort_values("N")
        .groupby(["beta", "dt", "nu"], dropna=False)
        .agg(
            n_meshes=("N", "count"),
            iters_min=("iters_first", "min"),
            iters_max=("iters_first", "max"),
            all_converged=("converged", "all"),
            monotone_growth=("iters_first", _grows),
            min_growth=("iters_first", _min_growth),
        )
        .reset_index()
    )
    summary["ratio"] = summary["iters_max"] / summary["iters_min"].clip(lower=1)

    def _ok(row) -> Optional[bool]:
        if row["beta"] >= 2.0:
            return bool(row["ratio"] <= BAND and row["iters_max"] <= MAX_ITERS and row["all_converged"])
        if row["beta"] >= 1.0:
            return bool(row["iters_max"] <= MAX_ITERS and row["all_converged"])
        return None

    summary["trend_ok"] = summary.apply(_ok, axis=1).astype("boolean")
    return summary


def trend_failures(summary: pd.DataFrame) -> List[str]:
    failed = summary[summary["trend_ok"].eq(False).fillna(False)]
    return [
        f"beta={r.beta:g} dt={r.dt:g} nu={r.nu:g}: iterations {r.iters_min}..{r.iters_max} "
        f"(ratio {r.ratio:.2f})"
        for r in failed.itertuples()
    ]


def oracle_failures(table: pd.DataFrame, tol: float = ORACLE_TOL) -> List[str]:
    """Rows with N <= DENSE_MAX_N whose first step differs from the dense solve by more than ``tol``."""
    small = table[table["N"] <= DENSE_MAX_N]
    failed = small[small["oracle_diff"].gt(tol)]
    return [
        f"beta={r.beta:g} dt={r.dt:g} nu={r.nu:g} N={r.N}: dense oracle difference "
        f"{r.oracle_diff:.3e} > {tol:g}"
        for r in failed.itertuples()
    ]


def write_tables(table: pd.DataFrame, out_dir: Path) -> Tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table_path = out_dir / "tbl_preconditioning.csv"
    summary_path = out_dir / "tbl_preconditioning_summary.csv"
    columns = [
        "beta", "dt", "nu", "N", "dofs", "iters_first", "iters_max",
        "iters_mean", "converged", "oracle_diff", "reference_iters",
    ]
    table[columns].to_csv(table_path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    trend_summary(table).to_csv(summary_path, index=False, float_format=FLOAT_FORMAT, na_rep="")
    logger.info("wrote %s and %s", table_path, summary_path)
    return table_path, summary_path


def main() -> None:
    logging.basicConfig(level=logging.INFO)
    table = preconditioning_study(
        ModelParams(), MESHES, [0.0, 1.0, 2.0], [0.3, 0.499], [1e-1, 1e-2, 1e-3]
    )
    write_tables(table, results_dir())


if __name__ == "__main__":
    main()
