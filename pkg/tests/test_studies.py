from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest

from src.analysis import convergence_study as cs
from src.analysis import preconditioning_study as ps
from src.analysis.errors import NORMS
from src.analysis.timestepping import build_problem
from src.discretization.params import ModelParams
from src.utils.exceptions import Breakdown
from src.utils.validate_outputs import validate


def _error_table(rates: dict[str, float], N=(8, 16, 32)) -> pd.DataFrame:
    rows = []
    for n in N:
        row = {"gamma": 10.0, "C1": 1.0, "beta": 1.0, "nu": 0.3, "N": n, "dt": 1.0 / n, "zero_norm": False}
        for name in NORMS:
            row[f"err_{name}"] = 3.0 * float(n) ** (-rates[name])
        rows.append(row)
    return pd.DataFrame(rows)


def test_observed_rates():
    rates = cs.observed_rates([8, 16, 32], [1.0, 0.25, 0.0625])
    assert math.isnan(rates[0])
    assert rates[1:] == pytest.approx([2.0, 2.0])
    assert math.isnan(cs.observed_rates([8, 16], [1.0, 0.0])[1])


def test_linear_fit_recovers_line():
    x = np.log(1.0 / np.array([8.0, 16.0, 32.0, 64.0]))
    intercept, slope, r2 = cs._linear_fit(x, 0.5 + 2.0 * x)
    assert slope == pytest.approx(2.0)
    assert intercept == pytest.approx(0.5)
    assert r2 == pytest.approx(1.0)


def test_add_rates_and_fits():
    expected = {"u_energy": 1.0, "u_h1": 1.0, "u_l2": 2.0, "p_h1": 1.0, "p_l2": 2.0}
    table = cs.add_rates(_error_table(expected))
    assert list(table.columns[:6]) == ["beta", "nu", "N", "dt", "err_u_energy", "rate_u_energy"]
    assert table["rate_p_l2"].iloc[1:].tolist() == pytest.approx([2.0, 2.0])
    assert cs.rate_violations(table) == []

    fits = cs.fitted_orders(table)
    assert len(fits) == len(NORMS)
    order = dict(zip(fits["norm"], fits["fitted_order"]))
    assert order == pytest.approx(expected)


def test_rate_violations_are_reported():
    rates = {"u_energy": 1.0, "u_h1": 1.0, "u_l2": 1.0, "p_h1": 1.0, "p_l2": 2.0}
    violations = cs.rate_violations(cs.add_rates(_error_table(rates)))
    assert len(violations) == 2
    assert all("rate_u_l2" in v for v in violations)


def test_small_convergence_study(tmp_path):
    table = cs.convergence_study(ModelParams(), [2, 4], [1.0], [0.3])
    assert len(table) == 2
    assert table["dt"].tolist() == pytest.approx([0.5, 0.25])
    assert math.isnan(table["rate_u_l2"].iloc[0])
    assert not table["zero_norm"].any()
    assert table["err_u_energy"].iloc[1] < table["err_u_energy"].iloc[0]

    cs.write_tables(table, tmp_path)
    assert validate(tmp_path, only_present=True) == []


def test_reference_counts():
    assert ps.reference_iters(2.0, 0.1, 0.3, 8) == 39
    assert ps.reference_iters(0.0, 1e-3, 0.499, 64) == 336
    assert ps.reference_iters(2.0, 0.1, 0.3, 4) is None
    assert ps.reference_iters(0.5, 0.1, 0.3, 8) is None


def test_trend_summary():
    rows = []
    for beta, counts in ((2.0, [40, 42, 45]), (1.0, [60, 200, 70]), (0.0, [100, 150, 200])):
        for N, iters in zip((8, 16, 32), counts):
            rows.append(
                {"beta": beta, "dt": 0.1, "nu": 0.3, "N": N, "iters_first": iters, "converged": True}
            )
    summary = ps.trend_summary(pd.DataFrame(rows)).set_index("beta")
    assert bool(summary.loc[2.0, "trend_ok"])
    assert not bool(summary.loc[1.0, "trend_ok"])
    assert pd.isna(summary.loc[0.0, "trend_ok"])
    assert bool(summary.loc[0.0, "monotone_growth"])
    assert summary.loc[2.0, "ratio"] == pytest.approx(45 / 40)

    failures = ps.trend_failures(summary.reset_index())
    assert len(failures) == 1
    assert failures[0].startswith("beta=1")


def test_growth_is_measured_for_weak_penalty():
    rows = []
    for beta, counts in ((0.0, [100, 150, 200]), (0.5, [31, 31, 33])):
        for N, iters in zip((8, 16, 32), counts):
            rows.append(
                {"beta": beta, "dt": 1e-3, "nu": 0.3, "N": N, "iters_first": iters, "converged": True}
            )
    summary = ps.trend_summary(pd.DataFrame(rows)).set_index("beta")
    assert summary.loc[0.0, "min_growth"] == pytest.approx(200 / 150)
    assert summary.loc[0.5, "min_growth"] == pytest.approx(1.0)
    assert not bool(summary.loc[0.5, "monotone_growth"])
    assert summary["trend_ok"].isna().all()
    assert ps.trend_failures(summary.reset_index()) == []


def test_oracle_failures():
    table = pd.DataFrame(
        {
            "beta": [2.0, 2.0, 2.0],
            "dt": [1e-3] * 3,
            "nu": [0.499] * 3,
            "N": [4, 8, 16],
            "oracle_diff": [3e-9, 2e-6, math.nan],
        }
    )
    failures = ps.oracle_failures(table)
    assert len(failures) == 1
    assert "N=8" in failures[0]
    assert ps.oracle_failures(table[table["N"] != 8]) == []


def test_solver_failure_is_recorded(monkeypatch):
    def broken_step(*args, **kwargs):
        raise Breakdown("residual increased at iteration 3")

    monkeypatch.setattr(ps, "cn_step", broken_step)
    row = ps.run_configuration(ModelParams(beta=2.0, dt=0.1), 2, steps=3, maxit=40)
    assert not row["converged"]
    assert row["iters_first"] == 40
    assert math.isnan(row["oracle_diff"])


def test_wide_spread_fails_robust_trend():
    rows = [
        {"beta": 2.0, "dt": 0.1, "nu": 0.3, "N": N, "iters_first": it, "converged": True}
        for N, it in ((8, 30), (16, 45))
    ]
    summary = ps.trend_summary(pd.DataFrame(rows))
    assert not bool(summary["trend_ok"].iloc[0])


def test_run_configuration_matches_dense_solve():
    params = ModelParams(beta=2.0, dt=0.1, T=0.2)
    row = ps.run_configuration(params, 2, steps=2, rtol=1e-12)
    assert row["converged"]
    assert row["iters_first"] >= 1
    assert row["iters_max"] >= row["iters_first"]
    assert row["oracle_diff"] <= 1e-6


def test_unconverged_configuration_is_recorded():
    row = ps.run_configuration(ModelParams(beta=2.0, dt=0.1), 2, steps=3, maxit=1)
    assert not row["converged"]
    assert row["iters_first"] == 1


def test_small_preconditioning_study(tmp_path):
    table = ps.preconditioning_study(ModelParams(), [2, 4], [2.0], [0.3], [0.1], steps=1)
    assert table["N"].tolist() == [2, 4]
    assert table["converged"].all()
    assert table["reference_iters"].isna().all()

    assert (table["oracle_diff"] <= ps.ORACLE_TOL).all()
    assert ps.oracle_failures(table) == []

    ps.write_tables(table, tmp_path)
    assert validate(tmp_path, only_present=True) == []
    written = pd.read_csv(tmp_path / "tbl_preconditioning.csv")
    assert list(written.columns)[-2:] == ["oracle_diff", "reference_iters"]


def test_study_grid_agrees_with_dense_solves():
    table = ps.preconditioning_study(
        ModelParams(), [4, 8], [0.0, 2.0], [0.3, 0.499], [1e-1, 1e-3], steps=1
    )
    assert table["converged"].all()
    assert table["oracle_diff"].notna().all()
    assert ps.oracle_failures(table) == []


def test_errors_are_robust_in_lambda_and_beta():
    table = cs.convergence_study(ModelParams(), [8], [1.0, 2.0], [0.3, 0.499])
    columns = [f"err_{name}" for name in NORMS]
    keyed = table.set_index(["beta", "nu"])[columns]
    for beta in (1.0, 2.0):
        ratio = keyed.loc[(beta, 0.499)] / keyed.loc[(beta, 0.3)]
        assert ratio.max() <= 1.5
    for nu in (0.3, 0.499):
        ratio = keyed.loc[(2.0, nu)] / keyed.loc[(1.0, nu)]
        assert np.allclose(ratio.to_numpy(), 1.0, atol=0.01)


@pytest.mark.slow
def test_convergence_rates_on_fine_meshes():
    table = cs.convergence_study(ModelParams(), [8, 16, 32], [1.0, 2.0], [0.3, 0.499])
    assert cs.rate_violations(table[table["N"] == 32]) == []

    # near-incompressible errors stay close to the compressible ones
    columns = [f"err_{name}" for name in NORMS]
    keyed = table.set_index(["beta", "N", "nu"])[columns]
    soft = keyed.xs(0.3, level="nu")
    stiff = keyed.xs(0.499, level="nu")
    assert (stiff / soft).to_numpy().max() <= 1.5


@pytest.mark.slow
def test_robust_iterations_for_strong_penalty():
    table = ps.preconditioning_study(ModelParams(), [8, 16, 32], [2.0], [0.3, 0.499], [1e-1, 1e-2], steps=2)
    summary = ps.trend_summary(table)
    assert ps.trend_failures(summary) == []


# Published errors at beta=1, nu=0.3 on the mesh with 3201 unknowns, our N=16.
PUBLISHED_N16 = {
    "u_energy": 1.1861e-01,
    "u_h1": 1.0361e-01,
    "u_l2": 1.0997e-02,
    "p_h1": 1.0178e-01,
    "p_l2": 9.9130e-03,
}


@pytest.mark.slow
def test_errors_match_published_values_on_matching_mesh():
    table = cs.convergence_study(ModelParams(), [16], [1.0], [0.3])
    row = table.iloc[0]
    dofs = build_problem(ModelParams(), 16).dofs
    assert dofs.n_u_full + dofs.n_p == 3201
    for name in ("u_energy", "u_h1", "p_h1"):
        assert row[f"err_{name}"] == pytest.approx(PUBLISHED_N16[name], rel=0.2)
    for name in ("u_l2", "p_l2"):
        assert row[f"err_{name}"] == pytest.approx(PUBLISHED_N16[name], rel=0.35)
