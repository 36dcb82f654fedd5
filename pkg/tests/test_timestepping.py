from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from src.analysis.errors import compute_errors
from src.analysis.manufactured import manufactured_loads, zero_solution
from src.analysis.timestepping import (
    CELL_BALANCE_FACTOR,
    StepState,
    build_problem,
    cell_mass_residuals,
    cn_rhs,
    cn_step,
    dense_oracle_check,
    discrete_energy,
    initial_data,
    resolve_steps,
    run_transient,
    zero_load_run,
)
from src.discretization.forms import assemble_load_f, assemble_projection_load
from src.discretization.params import ModelParams
from src.utils.exceptions import ConfigurationError


def test_resolve_steps():
    params, n = resolve_steps(ModelParams(dt=0.125))
    assert n == 8
    assert params.dt == 0.125


def test_resolve_steps_adjusts_dt(caplog):
    with caplog.at_level(logging.WARNING):
        params, n = resolve_steps(ModelParams(dt=0.3, T=1.0))
    assert n == 3
    assert params.dt == pytest.approx(1.0 / 3.0)
    assert "not an integer" in caplog.text


def test_single_step_run():
    run = run_transient(ModelParams(dt=0.25, T=0.25), 2)
    assert run.n_steps == 1
    assert run.final.t == pytest.approx(0.25)
    assert run.final.report.converged


def test_zero_state_stays_zero():
    problem = build_problem(ModelParams(dt=0.1), 2)
    dofs = problem.dofs
    state = StepState(t=0.0, u_coeffs=np.zeros(dofs.n_u), p_coeffs=np.zeros(dofs.n_p))
    nxt = cn_step(problem, state, zero_solution())
    assert nxt.report.iterations == 0
    assert not np.any(nxt.u_coeffs)
    assert not np.any(nxt.p_coeffs)


def test_initial_data_solves_both_equations(problem4):
    exact = manufactured_loads(problem4.params)
    state = initial_data(problem4, exact)
    dofs, forms = problem4.dofs, problem4.forms
    assert state.p_coeffs.shape == (dofs.n_p,)
    assert state.p_coeffs[-1] == 0.0

    rhs_u = assemble_load_f(dofs, exact.f, 0.0) - forms.B_div.T @ state.p_coeffs
    res_u = np.linalg.norm(forms.A_u @ state.u_coeffs - rhs_u)
    assert res_u <= 1e-8 * np.linalg.norm(rhs_u)

    pf = dofs.p_free
    load = assemble_projection_load(dofs, problem4.params, exact.p, exact.grad_p, 0.0)[pf]
    res_p = np.linalg.norm((forms.A_p @ state.p_coeffs)[pf] - load)
    assert res_p <= 1e-8 * np.linalg.norm(load)


def test_elliptic_projection_converges():
    params = ModelParams(dt=0.125)
    exact = manufactured_loads(params)
    errors = []
    for N in (8, 16):
        problem = build_problem(params, N)
        state = initial_data(problem, exact)
        errors.append(compute_errors(state, exact, problem.dofs, params).p_l2)
    assert math.log2(errors[0] / errors[1]) >= 1.8


def test_l2_initial_pressure(problem4):
    exact = manufactured_loads(problem4.params)
    state = initial_data(problem4, exact, "l2")
    assert np.isfinite(state.p_coeffs).all()
    with pytest.raises(ConfigurationError):
        initial_data(problem4, exact, "h1")


def test_energy_decays_without_loads():
    params = ModelParams(beta=2.0, dt=0.05, T=0.5)
    run = zero_load_run(params, 4, rtol=1e-12, keep_states=True)
    energies = [discrete_energy(run.problem, s) for s in run.states]
    assert energies[0] > 0.0
    for before, after in zip(energies, energies[1:]):
        assert after <= before * (1.0 + 1e-8)


def _worst_balance(run, rtol: float) -> float:
    worst = 0.0
    for previous, current in zip(run.states, run.states[1:]):
        residual, scale = cell_mass_residuals(run.problem, previous, current, run.exact)
        assert np.all(residual <= CELL_BALANCE_FACTOR * rtol * scale)
        worst = max(worst, float(np.max(residual / np.maximum(scale, 1e-300))))
    return worst


@pytest.mark.parametrize("beta", [0.0, 1.0, 2.0])
@pytest.mark.parametrize("nu", [0.3, 0.499])
def test_cell_mass_balance_at_default_tolerance(beta, nu):
    params = ModelParams(beta=beta, nu=nu, dt=0.1, T=1.0)
    run = run_transient(params, 4, rtol=1e-8, keep_states=True)
    assert run.n_steps == 10
    assert _worst_balance(run, 1e-8) <= 1e-6


def test_cell_mass_balance_with_storage():
    params = ModelParams(beta=2.0, dt=0.125, s0=0.2)
    run = run_transient(params, 4, rtol=1e-8, keep_states=True, max_steps=3)
    _worst_balance(run, 1e-8)


def test_balance_restarts_are_counted_separately():
    params = ModelParams(beta=1.0, nu=0.499, dt=0.1, T=1.0)
    run = run_transient(params, 4, rtol=1e-8, keep_states=True)
    _worst_balance(run, 1e-8)
    assert sum(r.correction_iterations for r in run.reports) > 0
    for report in run.reports:
        assert report.iterations == len(report.history) - 1


@pytest.mark.slow
@pytest.mark.parametrize("beta, nu", [(0.0, 0.3), (1.0, 0.499), (2.0, 0.3)])
def test_cell_mass_balance_on_finer_mesh(beta, nu):
    params = ModelParams(beta=beta, nu=nu, dt=0.1, T=1.0)
    run = run_transient(params, 8, rtol=1e-8, keep_states=True)
    assert _worst_balance(run, 1e-8) <= 1e-6


def test_minres_matches_dense_solve(problem4):
    exact = manufactured_loads(problem4.params)
    state = initial_data(problem4, exact)
    dofs = problem4.dofs
    full = cn_rhs(problem4, state, exact)
    rhs = np.concatenate([full[: dofs.n_u], dofs.restrict_p(full[dofs.n_u :])])
    nxt = cn_step(problem4, state, exact, rtol=1e-12)
    x = np.concatenate([nxt.u_coeffs, dofs.restrict_p(nxt.p_coeffs)])
    assert dense_oracle_check(problem4, rhs, x) <= 1e-6


def test_dense_oracle_size_limit():
    problem = build_problem(ModelParams(), 9)
    with pytest.raises(ConfigurationError):
        dense_oracle_check(problem, np.zeros(problem.system.size), np.zeros(problem.system.size))


def test_frozen_loads_stay_near_initial_accuracy():
    params = ModelParams(dt=0.125)
    exact = manufactured_loads(params).frozen(0.0)
    run = run_transient(params, 4, exact=exact, max_steps=4)
    before = compute_errors(run.initial, exact, run.problem.dofs, params)
    after = compute_errors(run.final, exact, run.problem.dofs, params)
    assert after.u_energy <= 10.0 * before.u_energy
    assert after.p_l2 <= 10.0 * before.p_l2


def test_keep_states_and_max_steps():
    run = run_transient(ModelParams(dt=0.125), 2, keep_states=True, max_steps=2)
    assert run.n_steps == 2
    assert len(run.states) == 3
    assert [s.t for s in run.states] == pytest.approx([0.0, 0.125, 0.25])
