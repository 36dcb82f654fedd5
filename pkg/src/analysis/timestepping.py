"""
Crank-Nicolson time stepping of the discrete Biot system.

Each step solves the symmetric indefinite system

    [[A_u, B^T], [B, -C]] (u^{n+1}, p^{n+1}) = F^{n+1},   C = M_s0 + S + dt/2 A_p

with block-diagonal preconditioned MinRes. Right-hand sides are built on the
full pressure numbering and restricted to the gauge-free DOFs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg as sla

from src.analysis.manufactured import ExactSolution, manufactured_loads, zero_solution
from src.discretization.dofs import DofHandler
from src.discretization.forms import (
    AssembledForms,
    BlockSystem,
    PreconditionerBlocks,
    assemble_forms,
    assemble_load_f,
    assemble_load_g,
    assemble_preconditioner,
    assemble_projection_load,
    assemble_system,
)
from src.discretization.mesh import BoundaryTags, Mesh, RegionSpec, build_structured_mesh, classify_boundary
from src.discretization.params import ModelParams
from src.solvers.minres import SolveReport, minres
from src.solvers.preconditioner import BlockPreconditioner
from src.solvers.sparse import spd_factorize
from src.utils.exceptions import ConfigurationError, NotPositiveDefinite

logger = logging.getLogger(__name__)

DENSE_MAX_N = 8
INITIAL_PRESSURE = ("elliptic", "l2")
CELL_BALANCE_FACTOR = 10.0
MAX_BALANCE_RESTARTS = 3


@dataclass(frozen=True, eq=False)
class BiotProblem:
    """Everything assembled for one (mesh, parameters) configuration."""

    params: ModelParams
    mesh: Mesh
    tags: BoundaryTags
    dofs: DofHandler
    forms: AssembledForms
    system: BlockSystem
    blocks: PreconditionerBlocks
    preconditioner: BlockPreconditioner


def build_problem(
    params: ModelParams,
    N: int,
    gamma_d: RegionSpec = "left",
    gamma_p: RegionSpec = "boundary",
) -> BiotProblem:
    mesh = build_structured_mesh(N)
    tags = classify_boundary(mesh, gamma_d, gamma_p)
    dofs = DofHandler.build(mesh, tags)
    forms = assemble_forms(dofs, params)
    system = assemble_system(forms, params)
    blocks = assemble_preconditioner(forms, params)
    preconditioner = BlockPreconditioner.from_blocks(blocks)
    logger.debug(
        "problem N=%d: %d displacement + %d pressure unknowns", N, dofs.n_u, dofs.n_p_free
    )
    return BiotProblem(
        params=params,
        mesh=mesh,
        tags=tags,
        dofs=dofs,
        forms=forms,
        system=system,
        blocks=blocks,
        preconditioner=preconditioner,
    )


@dataclass
class StepState:
    """Discrete state at time t.

    ``u_coeffs`` holds the free displacement DOFs only; ``p_coeffs`` is the
    full pressure vector (vertex block followed by cell block).
    """

    t: float
    u_coeffs: np.ndarray
    p_coeffs: np.ndarray
    report: Optional[SolveReport] = None


def initial_data(
    problem: BiotProblem,
    exact: ExactSolution,
    initial_pressure: str = "elliptic",
) -> StepState:
    """
    Compatible initial data at t = 0.

    p_h(0) is the elliptic projection of p(0) (``"l2"``: the L2 projection),
    and u_h(0) solves a_u(u_h, v) = (f(0), v) + (alpha p_h(0), div v).

    Raises
    ------
    ConfigurationError
        When the projection operator is singular or indefinite.
    """
    if initial_pressure not in INITIAL_PRESSURE:
        raise ConfigurationError(
            f"initial_pressure must be one of {INITIAL_PRESSURE}, got {initial_pressure!r}"
        )
    dofs, forms = problem.dofs, problem.forms
    pf = dofs.p_free
    if initial_pressure == "elliptic":
        operator = forms.A_p
        load = assemble_projection_load(dofs, problem.params, exact.p, exact.grad_p, 0.0)
    else:
        operator = forms.M
        load = assemble_load_g(dofs, exact.p, 0.0)
    try:
        factor = spd_factorize(operator[pf][:, pf], block=f"{initial_pressure} projection")
    except NotPositiveDefinite as exc:
        raise ConfigurationError(
            f"{initial_pressure} projection operator is not positive definite; "
            "check gamma and that Γ_p is non-empty"
        ) from exc
    p_full = dofs.prolong_p(factor.solve(load[pf]))

    rhs = assemble_load_f(dofs, exact.f, 0.0) - forms.B_div.T @ p_full
    u = spd_factorize(forms.A_u, block="A_u").solve(rhs)
    return StepState(t=0.0, u_coeffs=u, p_coeffs=p_full)


def cn_rhs(problem: BiotProblem, state: StepState, exact: ExactSolution) -> np.ndarray:
    """Right-hand side F^{n+1} of the step from ``state.t`` to ``state.t + dt``."""
    dofs, forms = problem.dofs, problem.forms
    dt = problem.system.dt
    t0, t1 = state.t, state.t + dt
    u, p = state.u_coeffs, state.p_coeffs
    rhs_u = (
        assemble_load_f(dofs, exact.f, t0)
        + assemble_load_f(dofs, exact.f, t1)
        - forms.A_u @ u
        - forms.B_div.T @ p
    )
    rhs_p = (
        -0.5 * dt * (assemble_load_g(dofs, exact.g, t0) + assemble_load_g(dofs, exact.g, t1))
        + forms.B_div @ u
        - (forms.S_mat + forms.M_s0) @ p
        + 0.5 * dt * (forms.A_p @ p)
    )
    return np.concatenate([rhs_u, rhs_p])


def _cell_balance(
    problem: BiotProblem, rhs_p: np.ndarray, u: np.ndarray, p_full: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    dofs, forms = problem.dofs, problem.forms
    B = forms.B_div
    C = problem.system.pressure_operator
    rows = dofs.n_pc + np.arange(dofs.n_p0)
    residual = np.abs(rhs_p - (B @ u - C @ p_full))[rows]
    scale = (abs(B) @ np.abs(u) + abs(C) @ np.abs(p_full) + np.abs(rhs_p))[rows]
    return residual, scale


def cn_step(
    problem: BiotProblem,
    state: StepState,
    exact: ExactSolution,
    rtol: float = 1e-8,
    maxit: int = 1000,
) -> StepState:
    """
    Advance one Crank-Nicolson step; NotConverged from MinRes propagates.

    After the MinRes solve, every cell balance must hold to
    ``CELL_BALANCE_FACTOR * rtol`` times its local scale. Cells that miss it
    trigger MinRes restarts from the current iterate, at most
    ``MAX_BALANCE_RESTARTS`` times; their iterations go to
    ``report.correction_iterations`` and ``report.iterations`` keeps the
    count of the first solve.
    """
    dofs = problem.dofs
    full = cn_rhs(problem, state, exact)
    rhs_p = full[dofs.n_u :]
    rhs = np.concatenate([full[: dofs.n_u], dofs.restrict_p(rhs_p)])
    x, report = minres(problem.system.apply, problem.preconditioner, rhs, rtol=rtol, maxit=maxit)
    for restart in range(MAX_BALANCE_RESTARTS + 1):
        u, p = dofs.split(x)
        residual, scale = _cell_balance(problem, rhs_p, u, p)
        worst = residual - CELL_BALANCE_FACTOR * rtol * scale
        if np.all(worst <= 0.0):
            break
        if restart == MAX_BALANCE_RESTARTS:
            logger.warning(
                "step t=%.4g: cell %d misses the mass balance by %.3e after %d restarts",
                state.t + problem.system.dt, int(np.argmax(worst)), float(worst.max()),
                MAX_BALANCE_RESTARTS,
            )
            break
        x, extra = minres(
            problem.system.apply, problem.preconditioner, rhs, rtol=rtol, maxit=maxit, x0=x
        )
        report.correction_iterations += extra.iterations
        report.residual = extra.residual
    logger.debug(
        "step t=%.4g: %d iterations (+%d balance), residual %.3e",
        state.t + problem.system.dt, report.iterations, report.correction_iterations,
        report.residual,
    )
    return StepState(t=state.t + problem.system.dt, u_coeffs=u, p_coeffs=p, report=report)


def discrete_energy(problem: BiotProblem, state: StepState) -> float:
    """a_u(u, u) + (s0 p, p) + S(p, p)."""
    forms = problem.forms
    u, p = state.u_coeffs, state.p_coeffs
    return float(u @ (forms.A_u @ u) + p @ (forms.M_s0 @ p) + p @ (forms.S_mat @ p))


def cell_mass_residuals(
    problem: BiotProblem,
    previous: StepState,
    current: StepState,
    exact: ExactSolution,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Pressure-row residual tested with each cell indicator, and its local scale.

    Returns
    -------
    residual, scale : ndarray, shape (n_triangles,)
        ``scale`` is |B| |u| + |C| |p| + |rhs| on the cell row.
    """
    dofs = problem.dofs
    rhs_p = cn_rhs(problem, previous, exact)[dofs.n_u :]
    return _cell_balance(problem, rhs_p, current.u_coeffs, current.p_coeffs)


def dense_oracle_check(problem: BiotProblem, rhs: np.ndarray, x: np.ndarray) -> float:
    """Relative difference between ``x`` and a dense direct solve of the reduced system."""
    if problem.mesh.N > DENSE_MAX_N:
        raise ConfigurationError(
            f"dense oracle is limited to N <= {DENSE_MAX_N}, got N={problem.mesh.N}"
        )
    dense = sla.solve(problem.system.matrix.toarray(), rhs, assume_a="sym")
    norm = float(np.linalg.norm(dense))
    diff = float(np.linalg.norm(x - dense))
    return diff / norm if norm > 0.0 else diff


def resolve_steps(params: ModelParams) -> tuple[ModelParams, int]:
    """Number of steps round(T/dt); dt is adjusted to T/n_steps when T/dt is not an integer."""
    ratio = params.T / params.dt
    n_steps = max(1, int(round(ratio)))
    if abs(ratio - n_steps) > 1e-9 * max(1.0, ratio):
        new_dt = params.T / n_steps
        logger.warning(
            "T/dt = %.6g is not an integer; taking %d steps with dt = %.6g",
            ratio, n_steps, new_dt,
        )
        params = params.with_overrides(dt=new_dt)
    return params, n_steps


@dataclass
class TransientRun:
    problem: BiotProblem
    exact: ExactSolution
    initial: StepState
    final: StepState
    reports: List[SolveReport] = field(default_factory=list)
    states: List[StepState] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.reports)


def run_transient(
    params: ModelParams,
    N: int,
    rtol: float = 1e-8,
    maxit: int = 1000,
    exact: Optional[ExactSolution] = None,
    initial: Optional[ExactSolution] = None,
    initial_pressure: str = "elliptic",
    gamma_d: RegionSpec = "left",
    gamma_p: RegionSpec = "boundary",
    keep_states: bool = False,
    max_steps: Optional[int] = None,
) -> TransientRun:
    """
    Run Crank-Nicolson steps over [0, T] from compatible initial data.

    Parameters
    ----------
    exact : ExactSolution, optional
        Source of the loads f and g; the manufactured solution by default.
    initial : ExactSolution, optional
        Source of the initial data when it differs from ``exact`` (for example
        zero loads with a nonzero initial pressure).
    keep_states : bool
        Keep every intermediate state, including the initial one.
    max_steps : int, optional
        Stop after this many steps even when T is not reached.
    """
    params, n_steps = resolve_steps(params)
    if max_steps is not None:
        n_steps = min(n_steps, int(max_steps))
    exact = exact if exact is not None else manufactured_loads(params)
    initial = initial if initial is not None else exact
    problem = build_problem(params, N, gamma_d, gamma_p)

    state = initial_data(problem, initial, initial_pressure)
    run = TransientRun(problem=problem, exact=exact, initial=state, final=state)
    if keep_states:
        run.states.append(state)
    for _ in range(n_steps):
        state = cn_step(problem, state, exact, rtol=rtol, maxit=maxit)
        run.reports.append(state.report)
        if keep_states:
            run.states.append(state)
    run.final = state
    iterations = [r.iterations for r in run.reports]
    logger.info(
        "transient N=%d beta=%g nu=%g dt=%g: %d steps, iterations max %d",
        N, params.beta, params.nu, params.dt, n_steps, max(iterations, default=0),
    )
    return run


def zero_load_run(params: ModelParams, N: int, **kwargs) -> TransientRun:
    """Transient with zero loads started from the manufactured initial data."""
    return run_transient(
        params, N, exact=zero_solution(), initial=manufactured_loads(params), **kwargs
    )
