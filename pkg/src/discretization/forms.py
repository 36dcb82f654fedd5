"""
Assembly of the bilinear and linear forms of the MTW / enriched Galerkin
discretization of the Biot system.

Matrices are assembled from per-cell and per-edge triplets into
``scipy.sparse`` CSR matrices. Displacement blocks live on the free
(non-Γ_d) DOFs; pressure blocks use the full vertex + cell numbering and are
restricted to the gauge-free DOFs only when the linear systems are built.

Pressure jumps: on an interior edge the vertex-hat traces of both sides
coincide, so the jump of q is the difference of the two cell values. On a
Γ_p edge the jump is the trace of q^c + q^0. Γ_f edges carry no terms.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from src.discretization.dofs import DofHandler
from src.discretization.elements import barycentric_gradients
from src.discretization.params import ModelParams
from src.discretization.quadrature import DEFAULT_DEGREE, edge_quadrature

logger = logging.getLogger(__name__)

VectorLoad = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
ScalarLoad = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


def _assemble_cells(
    local: np.ndarray, row_dofs: np.ndarray, col_dofs: np.ndarray, shape: tuple[int, int]
) -> sp.csr_matrix:
    rows = np.broadcast_to(row_dofs[:, :, None], local.shape)
    cols = np.broadcast_to(col_dofs[:, None, :], local.shape)
    return sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def _triplets(rows, cols, vals, shape: tuple[int, int]) -> sp.csr_matrix:
    rows = np.asarray(rows).ravel()
    cols = np.asarray(cols).ravel()
    vals = np.asarray(vals, dtype=float).ravel()
    return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()


def _symmetrize(A: sp.spmatrix) -> sp.csr_matrix:
    return ((A + A.T) * 0.5).tocsr()


def _block_diagonal_part(A: sp.spmatrix, n_c: int) -> sp.csr_matrix:
    """Drop the coupling between the first ``n_c`` DOFs and the rest."""
    A = A.tocoo()
    keep = (A.row < n_c) == (A.col < n_c)
    return sp.coo_matrix((A.data[keep], (A.row[keep], A.col[keep])), shape=A.shape).tocsr()


def _psi_at_rule(points: np.ndarray) -> np.ndarray:
    """Hats (barycentric coordinates) and the cell indicator at rule points."""
    return np.column_stack([points, np.ones(points.shape[0])])


def kappa_avg(params: ModelParams, normals: np.ndarray) -> np.ndarray:
    """n.kappa.n per edge; both neighbours share it for a constant kappa."""
    K = params.kappa_matrix
    return np.einsum("ec,cd,ed->e", normals, K, normals)


@dataclass(frozen=True, eq=False)
class _EdgeSets:
    interior: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    pressure: np.ndarray
    owner: np.ndarray


def _edge_sets(dofs: DofHandler) -> _EdgeSets:
    mesh = dofs.mesh
    interior = mesh.interior_edges
    pressure = np.flatnonzero(dofs.tags.gamma_p)
    return _EdgeSets(
        interior=interior,
        plus=mesh.edge_to_tris[interior, 0],
        minus=mesh.edge_to_tris[interior, 1],
        pressure=pressure,
        owner=mesh.edge_to_tris[pressure, 0],
    )


def _edge_trace_rule():
    """Edge points s and weights with the Γ_p trace functions (1 - s, s, 1)."""
    rule = edge_quadrature(DEFAULT_DEGREE)
    traces = np.column_stack([1.0 - rule.points, rule.points, np.ones(rule.n_points)])
    return rule, traces


def _jump_outer(dofs: DofHandler, edges: _EdgeSets, weights: np.ndarray) -> sp.csr_matrix:
    """Sum over interior edges of weight_e * J_e J_e^T with J_e = e_{T+} - e_{T-}."""
    cp = dofs.n_pc + edges.plus
    cm = dofs.n_pc + edges.minus
    rows = np.stack([cp, cp, cm, cm], axis=1)
    cols = np.stack([cp, cm, cp, cm], axis=1)
    vals = weights[:, None] * np.array([1.0, -1.0, -1.0, 1.0])
    return _triplets(rows, cols, vals, (dofs.n_p, dofs.n_p))


def assemble_a_u(dofs: DofHandler, params: ModelParams) -> sp.csr_matrix:
    """Broken elasticity form (2 mu eps(v), eps(w)) + (lam div v, div w) on free DOFs."""
    space = dofs.space
    areas = dofs.mesh.areas
    w = space.rule.weights
    local = np.empty((dofs.mesh.n_triangles, 9, 9))
    for cls, members in space.class_members():
        G = cls.gradients
        eps = 0.5 * (G + np.swapaxes(G, -1, -2))
        div = G[..., 0, 0] + G[..., 1, 1]
        K = 2.0 * params.mu * np.einsum("q,qicd,qjcd->ij", w, eps, eps)
        K += params.lam * np.einsum("q,qi,qj->ij", w, div, div)
        K = 0.5 * (K + K.T)
        local[members] = 2.0 * areas[members, None, None] * K
    A = _assemble_cells(local, dofs.cell_u_dofs, dofs.cell_u_dofs, (dofs.n_u_full,) * 2)
    A = _symmetrize(A)
    return A[dofs.u_free][:, dofs.u_free].tocsr()


def assemble_coupling(dofs: DofHandler, params: ModelParams) -> sp.csr_matrix:
    """B_div with entries -(alpha q, div v); rows all pressure DOFs, columns free u DOFs."""
    space = dofs.space
    areas = dofs.mesh.areas
    w = space.rule.weights
    psi = _psi_at_rule(space.rule.points)
    local = np.empty((dofs.mesh.n_triangles, 4, 9))
    for cls, members in space.class_members():
        div = cls.gradients[..., 0, 0] + cls.gradients[..., 1, 1]
        block = np.einsum("q,qa,qj->aj", w, psi, div)
        local[members] = -float(params.alpha) * 2.0 * areas[members, None, None] * block
    B = _assemble_cells(local, dofs.cell_p_dofs, dofs.cell_u_dofs, (dofs.n_p, dofs.n_u_full))
    return B[:, dofs.u_free].tocsr()


def _pressure_mass(dofs: DofHandler, weight: Optional[Callable] = None) -> sp.csr_matrix:
    mesh = dofs.mesh
    rule = dofs.space.rule
    psi = _psi_at_rule(rule.points)
    if weight is None:
        base = np.einsum("q,qa,qb->ab", rule.weights, psi, psi)
        local = 2.0 * mesh.areas[:, None, None] * base[None, :, :]
    else:
        pts = rule.physical_points(mesh.vertices[mesh.triangles])
        wt = weight(pts[..., 0], pts[..., 1])
        local = 2.0 * mesh.areas[:, None, None] * np.einsum(
            "tq,q,qa,qb->tab", wt, rule.weights, psi, psi
        )
    local = 0.5 * (local + np.swapaxes(local, 1, 2))
    M = _assemble_cells(local, dofs.cell_p_dofs, dofs.cell_p_dofs, (dofs.n_p, dofs.n_p))
    return _symmetrize(M)


def assemble_mass(dofs: DofHandler) -> sp.csr_matrix:
    """Unweighted L2 mass matrix on the full pressure numbering."""
    return _pressure_mass(dofs)


def assemble_mass_s0(dofs: DofHandler, params: ModelParams) -> sp.csr_matrix:
    """(s0 q, w) on the full pressure numbering; the zero matrix when s0 = 0."""
    if params.s0_is_zero:
        return sp.csr_matrix((dofs.n_p, dofs.n_p))
    return _pressure_mass(dofs, params.s0_at)


def assemble_pressure_stiffness(dofs: DofHandler, params: ModelParams) -> sp.csr_matrix:
    """(kappa grad q^c, grad w^c); nonzero only in the vertex block."""
    mesh = dofs.mesh
    grads = barycentric_gradients(mesh.vertices[mesh.triangles])
    local = mesh.areas[:, None, None] * np.einsum(
        "tac,cd,tbd->tab", grads, params.kappa_matrix, grads
    )
    local = 0.5 * (local + np.swapaxes(local, 1, 2))
    K = _assemble_cells(local, mesh.triangles, mesh.triangles, (dofs.n_p, dofs.n_p))
    return _symmetrize(K)


def assemble_consistency(dofs: DofHandler, params: ModelParams) -> sp.csr_matrix:
    """
    Symmetric consistency terms -<{kappa grad q^c}.n, [w]> - <[q], {kappa grad w^c}.n>
    over interior and Γ_p edges.
    """
    mesh = dofs.mesh
    edges = _edge_sets(dofs)
    K = params.kappa_matrix
    grads = barycentric_gradients(mesh.vertices[mesh.triangles])
    shape = (dofs.n_p, dofs.n_p)

    n = mesh.edge_normals[edges.interior]
    length = mesh.edge_lengths[edges.interior]
    flux_plus = 0.5 * np.einsum("tac,cd,td->ta", grads[edges.plus], K, n)
    flux_minus = 0.5 * np.einsum("tac,cd,td->ta", grads[edges.minus], K, n)
    flux_dofs = np.concatenate(
        [mesh.triangles[edges.plus], mesh.triangles[edges.minus]], axis=1
    )
    flux_vals = np.concatenate([flux_plus, flux_minus], axis=1)
    jump_dofs = np.column_stack([dofs.n_pc + edges.plus, dofs.n_pc + edges.minus])
    jump_vals = np.array([1.0, -1.0])
    rows = np.broadcast_to(jump_dofs[:, :, None], (len(length), 2, 6))
    cols = np.broadcast_to(flux_dofs[:, None, :], (len(length), 2, 6))
    vals = -length[:, None, None] * jump_vals[None, :, None] * flux_vals[:, None, :]
    one_sided = _triplets(rows, cols, vals, shape)

    rule, traces = _edge_trace_rule()
    n = mesh.edge_normals[edges.pressure]
    length = mesh.edge_lengths[edges.pressure]
    flux = np.einsum("tac,cd,td->ta", grads[edges.owner], K, n)
    trace_dofs = np.column_stack(
        [mesh.edges[edges.pressure, 0], mesh.edges[edges.pressure, 1], dofs.n_pc + edges.owner]
    )
    trace_int = length[:, None] * (rule.weights @ traces)[None, :]
    rows = np.broadcast_to(trace_dofs[:, :, None], (len(length), 3, 3))
    cols = np.broadcast_to(mesh.triangles[edges.owner][:, None, :], (len(length), 3, 3))
    vals = -trace_int[:, :, None] * flux[:, None, :]
    one_sided = one_sided + _triplets(rows, cols, vals, shape)
    return (one_sided + one_sided.T).tocsr()


def assemble_interior_penalty(dofs: DofHandler, params: ModelParams) -> sp.csr_matrix:
    """gamma kappa_avg h_e^(-1-beta) <[q], [w]> over interior edges."""
    mesh = dofs.mesh
    edges = _edge_sets(dofs)
    h = mesh.edge_lengths[edges.interior]
    kavg = kappa_avg(params, mesh.edge_normals[edges.interior])
    weights = params.gamma * kavg * h ** (-1.0 - params.beta) * h
    return _jump_outer(dofs, edges, weights)


def assemble_boundary_penalty(dofs: DofHandler, params: ModelParams) -> sp.csr_matrix:
    """gamma kappa_avg h_e^(-1) <q^c + q^0, w^c + w^0> over Γ_p edges."""
    mesh = dofs.mesh
    edges = _edge_sets(dofs)
    rule, traces = _edge_trace_rule()
    h = mesh.edge_lengths[edges.pressure]
    kavg = kappa_avg(params, mesh.edge_normals[edges.pressure])
    edge_mass = np.einsum("q,qa,qb->ab", rule.weights, traces, traces)
    local = (params.gamma * kavg * h ** -1.0 * h)[:, None, None] * edge_mass[None, :, :]
    trace_dofs = np.column_stack(
        [mesh.edges[edges.pressure, 0], mesh.edges[edges.pressure, 1], dofs.n_pc + edges.owner]
    )
    P = _assemble_cells(local, trace_dofs, trace_dofs, (dofs.n_p, dofs.n_p))
    return _symmetrize(P)


def assemble_jump_mass(dofs: DofHandler) -> sp.csr_matrix:
    """Sum over interior edges of h_e^(-1) <[q], [w]>."""
    mesh = dofs.mesh
    edges = _edge_sets(dofs)
    h = mesh.edge_lengths[edges.interior]
    return _jump_outer(dofs, edges, h ** -1.0 * h)


def assemble_a_p(dofs: DofHandler, params: ModelParams) -> sp.csr_matrix:
    """Interior over-stabilized enriched Galerkin form a_p on the full pressure numbering."""
    A = (
        assemble_pressure_stiffness(dofs, params)
        + assemble_consistency(dofs, params)
        + assemble_interior_penalty(dofs, params)
        + assemble_boundary_penalty(dofs, params)
    )
    return A.tocsr()


def assemble_S(dofs: DofHandler, params: ModelParams) -> sp.csr_matrix:
    """Stabilization gamma (1/lam + C1) sum_e h_e^(-1) <[q], [w]> over interior edges."""
    return (params.gamma * (params.lam_inv + params.C1) * assemble_jump_mass(dofs)).tocsr()


@dataclass(frozen=True, eq=False)
class AssembledForms:
    """All assembled operators of one (mesh, parameter) configuration.

    ``A_u`` is on the free displacement DOFs; pressure matrices use the full
    vertex + cell numbering. ``K_p``, ``C_p``, ``P_int`` and ``P_bnd`` are the
    pieces of ``A_p`` and ``J`` is the unweighted interior jump form.
    """

    dofs: DofHandler
    params: ModelParams
    A_u: sp.csr_matrix
    B_div: sp.csr_matrix
    M: sp.csr_matrix
    M_s0: sp.csr_matrix
    S_mat: sp.csr_matrix
    A_p: sp.csr_matrix
    K_p: sp.csr_matrix
    C_p: sp.csr_matrix
    P_int: sp.csr_matrix
    P_bnd: sp.csr_matrix
    J: sp.csr_matrix

    def hnorm_matrix(self) -> sp.csr_matrix:
        """Quadratic form of ||q||_h with separate boundary terms for q^c and q^0."""
        return (
            self.K_p + self.P_int + _block_diagonal_part(self.P_bnd, self.dofs.n_pc)
        ).tocsr()


def assemble_forms(dofs: DofHandler, params: ModelParams) -> AssembledForms:
    K_p = assemble_pressure_stiffness(dofs, params)
    C_p = assemble_consistency(dofs, params)
    P_int = assemble_interior_penalty(dofs, params)
    P_bnd = assemble_boundary_penalty(dofs, params)
    J = assemble_jump_mass(dofs)
    forms = AssembledForms(
        dofs=dofs,
        params=params,
        A_u=assemble_a_u(dofs, params),
        B_div=assemble_coupling(dofs, params),
        M=assemble_mass(dofs),
        M_s0=assemble_mass_s0(dofs, params),
        S_mat=(params.gamma * (params.lam_inv + params.C1) * J).tocsr(),
        A_p=(K_p + C_p + P_int + P_bnd).tocsr(),
        K_p=K_p,
        C_p=C_p,
        P_int=P_int,
        P_bnd=P_bnd,
        J=J,
    )
    logger.debug(
        "assembled forms: n_u=%d, n_p=%d, nnz(A_u)=%d, nnz(A_p)=%d",
        dofs.n_u, dofs.n_p, forms.A_u.nnz, forms.A_p.nnz,
    )
    return forms


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """Reduced symmetric indefinite operator [[A_u, B^T], [B, -C]] on (free u, free p)."""

    matrix: sp.csr_matrix
    A_u: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    pressure_operator: sp.csr_matrix
    dofs: DofHandler
    dt: float

    @property
    def n_u(self) -> int:
        return self.A_u.shape[0]

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x


def assemble_system(forms: AssembledForms, params: Optional[ModelParams] = None) -> BlockSystem:
    """Crank-Nicolson system form on the free displacement and gauge-free pressure DOFs."""
    params = params if params is not None else forms.params
    dofs = forms.dofs
    pf = dofs.p_free
    pressure = (forms.M_s0 + forms.S_mat + 0.5 * params.dt * forms.A_p).tocsr()
    B = forms.B_div[pf].tocsr()
    C = pressure[pf][:, pf].tocsr()
    if forms.A_u.shape != (B.shape[1], B.shape[1]) or C.shape != (B.shape[0], B.shape[0]):
        raise ValueError(
            f"block dimension mismatch: A_u {forms.A_u.shape}, B {B.shape}, C {C.shape}"
        )
    matrix = sp.bmat([[forms.A_u, B.T], [B, -C]], format="csr")
    return BlockSystem(
        matrix=matrix,
        A_u=forms.A_u,
        B=B,
        C=C,
        pressure_operator=pressure,
        dofs=dofs,
        dt=float(params.dt),
    )


@dataclass(frozen=True, eq=False)
class PreconditionerBlocks:
    """Diagonal blocks of the preconditioner on the system numbering."""

    P_V: sp.csr_matrix
    P_Qc: sp.csr_matrix
    P_Q0: sp.csr_matrix

    @property
    def matrix(self) -> sp.csr_matrix:
        return sp.block_diag([self.P_V, self.P_Qc, self.P_Q0], format="csr")


def assemble_preconditioner(
    forms: AssembledForms, params: Optional[ModelParams] = None
) -> PreconditionerBlocks:
    """
    Block-diagonal preconditioner operators.

    P_V = a_u. On the vertex block: (s0 + 1/lam) mass + dt/2 (stiffness +
    Γ_p penalty of q^c). On the cell block: (s0 + 1/lam) mass + S +
    dt/2 (interior penalty + Γ_p penalty of q^0).
    """
    params = params if params is not None else forms.params
    dofs = forms.dofs
    nc = dofs.n_pc
    half = 0.5 * params.dt
    mass = forms.M_s0 + params.lam_inv * forms.M
    P_c = (mass + half * (forms.K_p + forms.P_bnd))[:nc][:, :nc]
    P_0 = (mass + forms.S_mat + half * (forms.P_int + forms.P_bnd))[nc:][:, nc:]
    cells = dofs.p_free[dofs.p_free >= nc] - nc
    return PreconditionerBlocks(
        P_V=forms.A_u,
        P_Qc=_symmetrize(P_c),
        P_Q0=_symmetrize(P_0[cells][:, cells]),
    )


def assemble_load_f(
    dofs: DofHandler, f: Optional[VectorLoad], t: float = 0.0
) -> np.ndarray:
    """(f(t), v) on the free displacement DOFs; ``f(x, y, t) -> (..., 2)``."""
    if f is None:
        return np.zeros(dofs.n_u)
    mesh = dofs.mesh
    space = dofs.space
    pts = space.rule.physical_points(mesh.vertices[mesh.triangles])
    fv = np.asarray(f(pts[..., 0], pts[..., 1], t), dtype=float)
    local = np.empty((mesh.n_triangles, 9))
    for cls, members in space.class_members():
        local[members] = np.einsum("tqc,q,qjc->tj", fv[members], space.rule.weights, cls.values)
    local *= 2.0 * mesh.areas[:, None]
    full = np.bincount(dofs.cell_u_dofs.ravel(), local.ravel(), minlength=dofs.n_u_full)
    return dofs.restrict_u(full)


def assemble_load_g(
    dofs: DofHandler, g: Optional[ScalarLoad], t: float = 0.0
) -> np.ndarray:
    """(g(t), q) on the full pressure numbering; ``g(x, y, t) -> (...)``."""
    if g is None:
        return np.zeros(dofs.n_p)
    mesh = dofs.mesh
    rule = dofs.space.rule
    pts = rule.physical_points(mesh.vertices[mesh.triangles])
    gv = np.broadcast_to(np.asarray(g(pts[..., 0], pts[..., 1], t), dtype=float), pts.shape[:2])
    psi = _psi_at_rule(rule.points)
    local = 2.0 * mesh.areas[:, None] * np.einsum("tq,q,qa->ta", gv, rule.weights, psi)
    return np.bincount(dofs.cell_p_dofs.ravel(), local.ravel(), minlength=dofs.n_p)


def assemble_projection_load(
    dofs: DofHandler,
    params: ModelParams,
    p: ScalarLoad,
    grad_p: VectorLoad,
    t: float = 0.0,
) -> np.ndarray:
    """
    a_p(p, q) for a smooth pressure p (taken as p^c = p, p^0 = 0) against every
    pressure basis function; the right-hand side of the elliptic projection.
    """
    mesh = dofs.mesh
    rule = dofs.space.rule
    K = params.kappa_matrix
    grads = barycentric_gradients(mesh.vertices[mesh.triangles])
    load = np.zeros(dofs.n_p)

    pts = rule.physical_points(mesh.vertices[mesh.triangles])
    gp = np.asarray(grad_p(pts[..., 0], pts[..., 1], t), dtype=float)
    vol = 2.0 * mesh.areas[:, None] * np.einsum("tqc,q,cd,tad->ta", gp, rule.weights, K, grads)
    load += np.bincount(mesh.triangles.ravel(), vol.ravel(), minlength=dofs.n_p)

    edges = _edge_sets(dofs)
    erule, traces = _edge_trace_rule()

    def _edge_points(ids: np.ndarray) -> np.ndarray:
        a = mesh.vertices[mesh.edges[ids, 0]]
        b = mesh.vertices[mesh.edges[ids, 1]]
        return a[:, None, :] + erule.points[None, :, None] * (b - a)[:, None, :]

    ept = _edge_points(edges.interior)
    n = mesh.edge_normals[edges.interior]
    flux = np.einsum("eqc,cd,ed->eq", np.asarray(grad_p(ept[..., 0], ept[..., 1], t)), K, n)
    total = mesh.edge_lengths[edges.interior] * (flux @ erule.weights)
    load += np.bincount(dofs.n_pc + edges.plus, -total, minlength=dofs.n_p)
    load += np.bincount(dofs.n_pc + edges.minus, total, minlength=dofs.n_p)

    ept = _edge_points(edges.pressure)
    n = mesh.edge_normals[edges.pressure]
    length = mesh.edge_lengths[edges.pressure]
    flux = np.einsum("eqc,cd,ed->eq", np.asarray(grad_p(ept[..., 0], ept[..., 1], t)), K, n)
    pv = np.broadcast_to(np.asarray(p(ept[..., 0], ept[..., 1], t), dtype=float), flux.shape)
    trace_dofs = np.column_stack(
        [mesh.edges[edges.pressure, 0], mesh.edges[edges.pressure, 1], dofs.n_pc + edges.owner]
    )
    kavg = kappa_avg(params, n)
    penalty = params.gamma * kavg
    wq = erule.weights
    against_traces = np.einsum("eq,q,qb->eb", (penalty[:, None] * pv / length[:, None]) - flux, wq, traces)
    load += np.bincount(
        trace_dofs.ravel(), (length[:, None] * against_traces).ravel(), minlength=dofs.n_p
    )
    hat_flux = np.einsum("tac,cd,td->ta", grads[edges.owner], K, n)
    p_int = length * (pv @ wq)
    load += np.bincount(
        mesh.triangles[edges.owner].ravel(),
        (-p_int[:, None] * hat_flux).ravel(),
        minlength=dofs.n_p,
    )
    return load


def mean_zero_representation(dofs: DofHandler, q: np.ndarray) -> np.ndarray:
    """Shift a pressure vector so its cell part has zero mean; the function is unchanged."""
    q = np.array(q, dtype=float)
    areas = dofs.mesh.areas
    m = float(areas @ q[dofs.n_pc :]) / float(areas.sum())
    q[: dofs.n_pc] += m
    q[dofs.n_pc :] -= m
    return q
