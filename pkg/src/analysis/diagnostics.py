"""
Structural diagnostics of the discretization and the inf-sup sweep.

The structural suite checks mesh topology, the vertex-patch integral identity
3 (div v, q^c) = (div v, I_h q^c), the range of the divergence, normal and
tangential-mean continuity of the displacement space, the kernel of S,
symmetry of every assembled operator, coercivity of a_p in the ||.||_h norm
and the term-by-term assembly of ||.||_h.

Outputs
-------
results/tables/tbl_infsup.csv
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd
import scipy.linalg as sla
import scipy.sparse as sp

from src.analysis.timestepping import DENSE_MAX_N, BiotProblem, build_problem
from src.discretization.dofs import DofHandler
from src.discretization.elements import MtwSpace, barycentric_gradients
from src.discretization.forms import (
    AssembledForms,
    kappa_avg,
    assemble_coupling,
    assemble_forms,
)
from src.discretization.mesh import build_structured_mesh, check_topology, classify_boundary
from src.discretization.params import ModelParams
from src.discretization.quadrature import DEFAULT_DEGREE, edge_quadrature
from src.solvers.sparse import symmetry_defect
from src.utils.config import DEFAULT_SEED, results_dir
from src.utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.5e"
COERCIVITY_MIN = 0.1
INFSUP_MIN = 0.05
INFSUP_SPREAD = 2.0


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


@dataclass
class DiagnosticsReport:
    checks: List[CheckResult] = field(default_factory=list)

    def add(self, name: str, value: float, tolerance: float, passed: bool, detail: str = "") -> None:
        self.checks.append(CheckResult(name, bool(passed), float(value), float(tolerance), detail))

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def render(self) -> str:
        lines = []
        for check in self.checks:
            status = "PASS" if check.passed else "FAIL"
            line = f"{status}  {check.name:<28} value={check.value:.3e}  tol={check.tolerance:.1e}"
            if check.detail:
                line += f"  ({check.detail})"
            lines.append(line)
        return "\n".join(lines)


def vertex_patch_sums(dofs: DofHandler, q_vertex: np.ndarray) -> np.ndarray:
    """Cell values of I_h q^c = sum_i q^c(v_i) chi_i: the sum over the cell's vertices."""
    return np.asarray(q_vertex)[dofs.mesh.triangles].sum(axis=1)


def integral_identity_defect(
    dofs: DofHandler, params: ModelParams, rng: np.random.Generator, n_pairs: int = 50
) -> float:
    """Worst relative defect of 3 (div v, q^c) = (div v, I_h q^c) over random pairs."""
    D = -assemble_coupling(dofs, params.with_overrides(alpha=1.0))
    D_vertex = D[: dofs.n_pc]
    D_cell = D[dofs.n_pc :]
    worst = 0.0
    for _ in range(n_pairs):
        v = rng.standard_normal(dofs.n_u)
        q = rng.standard_normal(dofs.n_pc)
        vertex_part = D_vertex @ v
        lhs = 3.0 * float(q @ vertex_part)
        rhs = float(vertex_patch_sums(dofs, q) @ (D_cell @ v))
        scale = 3.0 * float(np.abs(q) @ np.abs(vertex_part)) or 1.0
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def divergence_range_defect(space: MtwSpace) -> float:
    """Largest relative variation of a basis divergence over a triangle."""
    worst = 0.0
    for cls, _ in space.class_members():
        div = cls.gradients[..., 0, 0] + cls.gradients[..., 1, 1]
        scale = float(np.abs(div).max()) or 1.0
        worst = max(worst, float(np.abs(div - div.mean(axis=0)).max()) / scale)
    return worst


def trace_jumps(space: MtwSpace) -> tuple[float, float, int]:
    """
    Jumps of every global basis function across interior edges.

    Returns
    -------
    normal, tangential_mean, worst_edge
        Largest pointwise jump of v.n, largest jump of the edge mean of v.t,
        and the edge where the normal jump is largest (-1 when none).
    """
    mesh = space.mesh
    rule = edge_quadrature(DEFAULT_DEGREE)
    interior = mesh.interior_edges
    n_q = rule.n_points
    rows_n, cols_n, vals_n = [], [], []
    rows_t, cols_t, vals_t = [], [], []
    for r, e in enumerate(interior):
        a = mesh.vertices[mesh.edges[e, 0]]
        b = mesh.vertices[mesh.edges[e, 1]]
        pts = a + rule.points[:, None] * (b - a)
        for side, sign in ((0, 1.0), (1, -1.0)):
            t = mesh.edge_to_tris[e, side]
            values = space.local_basis(t).values(pts)
            normal = values @ mesh.edge_normals[e]
            tangent = (values @ mesh.edge_tangents[e]).T @ rule.weights
            dof_cols = space.cell_dofs[t]
            rows_n.append(np.repeat(r * n_q + np.arange(n_q), 9))
            cols_n.append(np.tile(dof_cols, n_q))
            vals_n.append(sign * normal.ravel())
            rows_t.append(np.full(9, r))
            cols_t.append(dof_cols)
            vals_t.append(sign * tangent)
    if not rows_n:
        return 0.0, 0.0, -1
    n_cols = space.n_dofs
    jn = sp.coo_matrix(
        (np.concatenate(vals_n), (np.concatenate(rows_n), np.concatenate(cols_n))),
        shape=(len(interior) * n_q, n_cols),
    ).tocsr()
    jt = sp.coo_matrix(
        (np.concatenate(vals_t), (np.concatenate(rows_t), np.concatenate(cols_t))),
        shape=(len(interior), n_cols),
    ).tocsr()
    per_row = abs(jn).max(axis=1).toarray().ravel()
    worst_row = int(np.argmax(per_row))
    tangential = float(abs(jt).max()) if jt.nnz else 0.0
    return float(per_row[worst_row]), tangential, int(interior[worst_row // n_q])


def mean_zero_transform(dofs: DofHandler) -> np.ndarray:
    """Dense matrix T with T q the representation of q whose cell block has zero mean."""
    weights = np.zeros(dofs.n_p)
    weights[dofs.n_pc :] = dofs.mesh.areas / dofs.mesh.areas.sum()
    direction = np.ones(dofs.n_p)
    direction[dofs.n_pc :] = -1.0
    return np.eye(dofs.n_p) + np.outer(direction, weights)


def coercivity_constant(
    forms: AssembledForms, rng: np.random.Generator, n_samples: int = 200
) -> float:
    """
    Smallest ratio a_p(q, q) / ||q||_h^2 over the span of random gauge-fixed q.

    ||q||_h is evaluated on the mean-zero representation of q. With at least
    as many samples as pressure unknowns the span is the whole space and the
    value is the exact coercivity constant of the mesh.
    """
    dofs = forms.dofs
    if dofs.mesh.N > DENSE_MAX_N:
        raise ConfigurationError(f"coercivity check is limited to N <= {DENSE_MAX_N}")
    pf = dofs.p_free
    basis = sla.orth(rng.standard_normal((dofs.n_p_free, n_samples)))
    T = mean_zero_transform(dofs)[:, pf]
    H = T.T @ (forms.hnorm_matrix() @ T)
    A = forms.A_p[pf][:, pf].toarray()
    A_r = basis.T @ A @ basis
    H_r = basis.T @ H @ basis
    eig = sla.eigh(0.5 * (A_r + A_r.T), 0.5 * (H_r + H_r.T), eigvals_only=True)
    return float(eig[0])


def hnorm_terms(forms: AssembledForms, q: np.ndarray) -> dict:
    """The pieces of ||q||_h^2 accumulated directly from their definitions."""
    dofs, params = forms.dofs, forms.params
    mesh = dofs.mesh
    q = np.asarray(q, dtype=float)
    q_cell = q[dofs.n_pc :]

    grads = np.einsum(
        "ta,tad->td", q[mesh.triangles], barycentric_gradients(mesh.vertices[mesh.triangles])
    )
    stiffness = float(np.sum(mesh.areas * np.einsum("tc,cd,td->t", grads, params.kappa_matrix, grads)))

    interior = mesh.interior_edges
    h = mesh.edge_lengths[interior]
    jump = q_cell[mesh.edge_to_tris[interior, 0]] - q_cell[mesh.edge_to_tris[interior, 1]]
    kavg = kappa_avg(params, mesh.edge_normals[interior])
    interior_penalty = float(np.sum(params.gamma * kavg * h ** (-1.0 - params.beta) * h * jump**2))

    edges = np.flatnonzero(dofs.tags.gamma_p)
    h = mesh.edge_lengths[edges]
    a, b = q[mesh.edges[edges, 0]], q[mesh.edges[edges, 1]]
    owner = q_cell[mesh.edge_to_tris[edges, 0]]
    weight = params.gamma * kappa_avg(params, mesh.edge_normals[edges]) / h
    boundary_c = float(np.sum(weight * h * (a**2 + a * b + b**2) / 3.0))
    boundary_0 = float(np.sum(weight * h * owner**2))
    return {
        "stiffness": stiffness,
        "interior_penalty": interior_penalty,
        "boundary_c": boundary_c,
        "boundary_0": boundary_0,
    }


def hnorm_defect(forms: AssembledForms, rng: np.random.Generator, n_samples: int = 10) -> float:
    """Relative difference between the assembled ||.||_h form and its term-by-term value."""
    H = forms.hnorm_matrix()
    worst = 0.0
    for _ in range(n_samples):
        q = rng.standard_normal(forms.dofs.n_p)
        assembled = float(q @ (H @ q))
        direct = sum(hnorm_terms(forms, q).values())
        worst = max(worst, abs(assembled - direct) / max(abs(direct), 1e-300))
    return worst


def structural_diagnostics(
    problem: BiotProblem, seed: int = DEFAULT_SEED, n_pairs: int = 50, n_samples: int = 200
) -> DiagnosticsReport:
    """Run every structural check on an assembled problem and collect the results."""
    rng = np.random.default_rng(seed)
    mesh, dofs, forms = problem.mesh, problem.dofs, problem.forms
    report = DiagnosticsReport()

    errors = check_topology(mesh)
    report.add("mesh topology", len(errors), 0, not errors, "; ".join(errors[:3]))

    ones = vertex_patch_sums(dofs, np.ones(dofs.n_pc))
    report.add("I_h 1 = 3", float(np.abs(ones - 3.0).max()), 0.0, np.all(ones == 3.0))

    defect = integral_identity_defect(dofs, problem.params, rng, n_pairs)
    report.add("vertex-patch identity", defect, 1e-12, defect <= 1e-12, f"{n_pairs} random pairs")

    defect = divergence_range_defect(dofs.space)
    report.add("div V_h in P0", defect, 1e-10, defect <= 1e-10)

    normal, tangential, edge = trace_jumps(dofs.space)
    report.add("normal continuity", normal, 1e-10, normal <= 1e-10, f"worst edge {edge}")
    report.add("tangential mean continuity", tangential, 1e-10, tangential <= 1e-10)

    q_c = np.zeros(dofs.n_p)
    q_c[: dofs.n_pc] = rng.standard_normal(dofs.n_pc)
    kernel = float(np.abs(forms.S_mat @ q_c).max())
    block = forms.S_mat[:, : dofs.n_pc]
    block_max = float(abs(block).max()) if block.nnz else 0.0
    report.add("S vanishes on Q_h^c", max(kernel, block_max), 0.0, kernel == 0.0 and block_max == 0.0)

    for name, matrix in (
        ("A_u", forms.A_u),
        ("A_p", forms.A_p),
        ("S", forms.S_mat),
        ("system", problem.system.matrix),
        ("preconditioner", problem.blocks.matrix),
    ):
        defect = symmetry_defect(matrix)
        report.add(f"symmetry {name}", defect, 1e-14, defect <= 1e-14)

    constant = coercivity_constant(forms, rng, n_samples)
    report.add(
        "a_p coercivity", constant, COERCIVITY_MIN, constant >= COERCIVITY_MIN,
        f"gamma={problem.params.gamma:g}",
    )
    if constant < COERCIVITY_MIN:
        logger.warning(
            "a_p coercivity ratio %.3e below %.1e at gamma=%g", constant, COERCIVITY_MIN,
            problem.params.gamma,
        )

    defect = hnorm_defect(forms, rng)
    report.add("||q||_h term-by-term", defect, 1e-12, defect <= 1e-12)
    return report


def sample_coercivity(params: ModelParams, N: int = 4, seed: int = DEFAULT_SEED) -> float:
    """Coercivity ratio on a small sample mesh; warns when it is below COERCIVITY_MIN."""
    mesh = build_structured_mesh(N)
    dofs = DofHandler.build(mesh, classify_boundary(mesh))
    constant = coercivity_constant(assemble_forms(dofs, params), np.random.default_rng(seed))
    if constant < COERCIVITY_MIN:
        logger.warning(
            "gamma=%g gives a_p coercivity ratio %.3e on the N=%d sample mesh; increase gamma",
            params.gamma, constant, N,
        )
    return constant


@dataclass(frozen=True)
class InfSupResult:
    min_abs_eig: float
    max_abs_eig: float
    n_negative: int

    @property
    def condition(self) -> float:
        return self.max_abs_eig / self.min_abs_eig


def infsup_diagnostic(problem: BiotProblem) -> InfSupResult:
    """
    Extreme eigenvalues of the generalized problem B x = lambda P x.

    A dense symmetric-definite eigensolve; refused for N > 8.
    """
    N = problem.mesh.N
    if N > DENSE_MAX_N:
        raise ConfigurationError(f"inf-sup diagnostic is limited to N <= {DENSE_MAX_N}, got N={N}")
    eig = sla.eigh(
        problem.system.matrix.toarray(), problem.blocks.matrix.toarray(), eigvals_only=True
    )
    magnitude = np.abs(eig)
    return InfSupResult(
        min_abs_eig=float(magnitude.min()),
        max_abs_eig=float(magnitude.max()),
        n_negative=int(np.count_nonzero(eig < 0.0)),
    )


def infsup_sweep(
    template: ModelParams,
    N_list: Iterable[int] = (2, 4, 8),
    nu_list: Iterable[float] = (0.3, 0.4999),
    dt_list: Iterable[float] = (1e-1, 1e-3),
) -> pd.DataFrame:
    rows = []
    for nu in nu_list:
        for dt in dt_list:
            params = template.with_overrides(nu=nu, dt=dt)
            for N in N_list:
                result = infsup_diagnostic(build_problem(params, int(N)))
                logger.info(
                    "inf-sup beta=%g dt=%g nu=%g N=%d: min |eig| %.4f",
                    params.beta, dt, nu, N, result.min_abs_eig,
                )
                rows.append(
                    {
                        "beta": params.beta,
                        "dt": dt,
                        "nu": nu,
                        "N": int(N),
                        "min_abs_eig": result.min_abs_eig,
                        "max_abs_eig": result.max_abs_eig,
                        "condition": result.condition,
                        "n_negative": result.n_negative,
                    }
                )
    return pd.DataFrame(rows)


def infsup_checks(table: pd.DataFrame, report: Optional[DiagnosticsReport] = None) -> DiagnosticsReport:
    """Spread of min |eig| across the sweep below INFSUP_SPREAD and its minimum above INFSUP_MIN."""
    report = report if report is not None else DiagnosticsReport()
    low = float(table["min_abs_eig"].min())
    spread = float(table["min_abs_eig"].max()) / low if low > 0.0 else float("inf")
    report.add("inf-sup lower bound", low, INFSUP_MIN, low >= INFSUP_MIN)
    report.add("inf-sup spread", spread, INFSUP_SPREAD, spread < INFSUP_SPREAD)
    return report


def write_infsup(table: pd.DataFrame, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "tbl_infsup.csv"
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("wrote %s", path)
    return path


def main() -> None:
    logging.basicConfig(level=logging.INFO)
    params = ModelParams(beta=2.0, dt=1e-2)
    report = structural_diagnostics(build_problem(params, 4))
    table = infsup_sweep(params)
    infsup_checks(table, report)
    print(report.render())
    write_infsup(table, results_dir())
    if not report.passed:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
