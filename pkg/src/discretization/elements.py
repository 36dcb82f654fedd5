"""
Lowest-order Mardal-Tai-Winther displacement element and enriched Galerkin
pressure functions.

The MTW basis is built on each physical triangle: the 20-dimensional space
of cubic vector polynomials (in coordinates centred at the centroid and
scaled by the diameter) is cut down to the 9-dimensional subspace with
constant divergence and linear normal traces, and the dual basis is obtained
by inverting the 9 x 9 matrix of edge functionals. Triangles related by a
translation share the same coefficients, so bases are cached per class.

Edge functionals of edge e (parameter s from its first to its second global
vertex, global normal n_e and tangent t_e):

    mean of v.n_e,   mean of (s - 1/2) v.n_e,   mean of v.t_e
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import null_space

from src.discretization.mesh import Mesh
from src.discretization.quadrature import (
    DEFAULT_DEGREE,
    QuadratureRule,
    edge_quadrature,
    triangle_quadrature,
)
from src.utils.exceptions import ElementConstructionError

logger = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]

EXPONENTS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3))
N_MONOMIALS = len(EXPONENTS)
LOCAL_DIM = 9
MAX_CONDITION = 1e12

_INDEX = {exp: i for i, exp in enumerate(EXPONENTS)}


def _legendre_2(s: np.ndarray) -> np.ndarray:
    return 6.0 * s**2 - 6.0 * s + 1.0


def _legendre_3(s: np.ndarray) -> np.ndarray:
    return 20.0 * s**3 - 30.0 * s**2 + 12.0 * s - 1.0


def _monomials(xi: np.ndarray) -> np.ndarray:
    """Scaled monomials at points ``xi`` of shape (n, 2); returns (n, 10)."""
    x, y = xi[:, 0], xi[:, 1]
    return np.stack([x**a * y**b for a, b in EXPONENTS], axis=1)


def _monomial_derivatives(xi: np.ndarray) -> np.ndarray:
    """Derivatives with respect to the scaled coordinates, shape (n, 10, 2)."""
    x, y = xi[:, 0], xi[:, 1]
    out = np.zeros((xi.shape[0], N_MONOMIALS, 2))
    for m, (a, b) in enumerate(EXPONENTS):
        if a:
            out[:, m, 0] = a * x ** (a - 1) * y**b
        if b:
            out[:, m, 1] = b * x**a * y ** (b - 1)
    return out


def _vector_values(xi: np.ndarray) -> np.ndarray:
    """Values of the 20 vector monomials, shape (n, 2, 20)."""
    mono = _monomials(xi)
    out = np.zeros((xi.shape[0], 2, 2 * N_MONOMIALS))
    out[:, 0, :N_MONOMIALS] = mono
    out[:, 1, N_MONOMIALS:] = mono
    return out


def _divergence_rows() -> np.ndarray:
    """Rows giving the non-constant coefficients of div, shape (5, 20)."""
    rows = np.zeros((N_MONOMIALS, 2 * N_MONOMIALS))
    for m, (a, b) in enumerate(EXPONENTS):
        if a:
            rows[_INDEX[(a - 1, b)], m] += a
        if b:
            rows[_INDEX[(a, b - 1)], N_MONOMIALS + m] += b
    degree = np.array([a + b for a, b in EXPONENTS])
    return rows[(degree >= 1) & (degree <= 2)]


@dataclass(frozen=True, eq=False)
class MtwLocalBasis:
    """Nine MTW basis functions on one triangle.

    ``coeffs[:, j]`` expands basis function j over the vector monomials in
    the coordinates ``(x - center) / scale``.
    """

    coeffs: np.ndarray
    center: np.ndarray
    scale: float

    def local_coordinates(self, points: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(points) - self.center) / self.scale

    def values(self, points: np.ndarray) -> np.ndarray:
        """Basis values, shape (n, 9, 2)."""
        vals = _vector_values(self.local_coordinates(points)) @ self.coeffs
        return np.transpose(vals, (0, 2, 1))

    def gradients(self, points: np.ndarray) -> np.ndarray:
        """Jacobians ``[n, j, c, d] = d(phi_j)_c / dx_d``, shape (n, 9, 2, 2)."""
        dmono = _monomial_derivatives(self.local_coordinates(points)) / self.scale
        cx = self.coeffs[:N_MONOMIALS]
        cy = self.coeffs[N_MONOMIALS:]
        gx = np.einsum("nmd,mj->njd", dmono, cx)
        gy = np.einsum("nmd,mj->njd", dmono, cy)
        return np.stack([gx, gy], axis=2)


def _edge_functionals(
    center: np.ndarray,
    scale: float,
    starts: np.ndarray,
    ends: np.ndarray,
    normals: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Trace constraints (6, 20) and DOF functionals (9, 20) on the monomials."""
    rule = edge_quadrature(DEFAULT_DEGREE)
    s, w = rule.points, rule.weights
    constraints = np.zeros((6, 2 * N_MONOMIALS))
    functionals = np.zeros((LOCAL_DIM, 2 * N_MONOMIALS))
    for k in range(3):
        a, b, n = starts[k], ends[k], normals[k]
        tangent = (b - a) / np.linalg.norm(b - a)
        pts = a[None, :] + s[:, None] * (b - a)[None, :]
        vals = _vector_values((pts - center) / scale)
        vn = np.einsum("c,qck->qk", n, vals)
        vt = np.einsum("c,qck->qk", tangent, vals)
        constraints[2 * k] = (w * _legendre_2(s)) @ vn
        constraints[2 * k + 1] = (w * _legendre_3(s)) @ vn
        functionals[3 * k] = w @ vn
        functionals[3 * k + 1] = (w * (s - 0.5)) @ vn
        functionals[3 * k + 2] = w @ vt
    return constraints, functionals


def mtw_local_basis(
    tri_xy: np.ndarray,
    edge_starts: Optional[np.ndarray] = None,
    edge_ends: Optional[np.ndarray] = None,
    edge_normals: Optional[np.ndarray] = None,
) -> MtwLocalBasis:
    """
    Build the MTW basis on one physical triangle.

    Parameters
    ----------
    tri_xy : ndarray, shape (3, 2)
        Counterclockwise vertex coordinates.
    edge_starts, edge_ends : ndarray, shape (3, 2), optional
        Endpoints of local edge k (opposite vertex k) in global orientation.
        Defaults to the counterclockwise orientation.
    edge_normals : ndarray, shape (3, 2), optional
        Unit normals signing the normal-moment DOFs. Defaults to outward.

    Raises
    ------
    ElementConstructionError
        If the local space is not 9-dimensional or the DOF matrix is
        numerically singular.
    """
    tri_xy = np.asarray(tri_xy, dtype=float)
    if edge_starts is None or edge_ends is None:
        edge_starts = tri_xy[[1, 2, 0]]
        edge_ends = tri_xy[[2, 0, 1]]
    if edge_normals is None:
        d = edge_ends - edge_starts
        edge_normals = np.column_stack([d[:, 1], -d[:, 0]]) / np.linalg.norm(d, axis=1)[:, None]

    center = tri_xy.mean(axis=0)
    scale = float(max(np.linalg.norm(tri_xy[i] - tri_xy[j]) for i, j in ((0, 1), (1, 2), (2, 0))))
    if scale <= 0.0:
        raise ElementConstructionError("degenerate triangle with zero diameter")

    traces, functionals = _edge_functionals(center, scale, edge_starts, edge_ends, edge_normals)
    constraints = np.vstack([_divergence_rows(), traces])
    kernel = null_space(constraints)
    if kernel.shape[1] != LOCAL_DIM:
        raise ElementConstructionError(
            f"local MTW space has dimension {kernel.shape[1]}, expected {LOCAL_DIM}"
        )
    dof_matrix = functionals @ kernel
    condition = np.linalg.cond(dof_matrix)
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise ElementConstructionError(
            f"MTW DOF matrix is ill-conditioned (cond={condition:.3e}); degenerate triangle?"
        )
    coeffs = kernel @ np.linalg.inv(dof_matrix)
    return MtwLocalBasis(coeffs=coeffs, center=center, scale=scale)


def mtw_eval(basis: MtwLocalBasis, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Values (n, 9, 2) and Jacobians (n, 9, 2, 2) of the nine basis functions."""
    return basis.values(points), basis.gradients(points)


def barycentric_gradients(tri_xy: np.ndarray) -> np.ndarray:
    """Gradients of the three hat functions; ``tri_xy`` is (..., 3, 2), result (..., 3, 2)."""
    x = tri_xy[..., 0]
    y = tri_xy[..., 1]
    twice_area = (x[..., 1] - x[..., 0]) * (y[..., 2] - y[..., 0]) - (
        x[..., 2] - x[..., 0]
    ) * (y[..., 1] - y[..., 0])
    grads = np.empty(tri_xy.shape)
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        grads[..., k, 0] = (y[..., i] - y[..., j]) / twice_area
        grads[..., k, 1] = (x[..., j] - x[..., i]) / twice_area
    return grads


def eg_eval(tri_xy: np.ndarray, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Enriched Galerkin shape functions on a triangle.

    Returns values (n, 4) and gradients (n, 4, 2) ordered as the three vertex
    hats followed by the cell indicator.
    """
    tri_xy = np.asarray(tri_xy, dtype=float)
    points = np.atleast_2d(points)
    grads = barycentric_gradients(tri_xy)
    center = tri_xy.mean(axis=0)
    hats = 1.0 / 3.0 + (points - center) @ grads.T
    values = np.column_stack([hats, np.ones(points.shape[0])])
    gradients = np.zeros((points.shape[0], 4, 2))
    gradients[:, :3, :] = grads[None, :, :]
    return values, gradients


@dataclass(frozen=True, eq=False)
class _ElementClass:
    coeffs: np.ndarray
    scale: float
    values: np.ndarray
    gradients: np.ndarray


class MtwSpace:
    """MTW bases for every triangle of a mesh, cached by translation class.

    Element orientation follows ``mesh.tri_edge_signs``: the normal-moment
    DOFs of local edge k are taken against ``sign * outward normal``.
    """

    def __init__(self, mesh: Mesh, degree: int = DEFAULT_DEGREE) -> None:
        self.mesh = mesh
        self.rule: QuadratureRule = triangle_quadrature(degree)
        tris = mesh.triangles
        coords = mesh.vertices[tris]
        self.centroids = coords.mean(axis=1)

        edges = mesh.edges[mesh.tri_to_edges]
        self.edge_starts = mesh.vertices[edges[:, :, 0]]
        self.edge_ends = mesh.vertices[edges[:, :, 1]]
        d = mesh.vertices[tris[:, [2, 0, 1]]] - mesh.vertices[tris[:, [1, 2, 0]]]
        outward = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        outward /= np.linalg.norm(outward, axis=-1, keepdims=True)
        self.edge_normals = mesh.tri_edge_signs[:, :, None] * outward

        c = self.centroids[:, None, :]
        features = np.concatenate(
            [
                (coords - c).reshape(len(tris), -1),
                (self.edge_starts - c).reshape(len(tris), -1),
                (self.edge_ends - c).reshape(len(tris), -1),
                self.edge_normals.reshape(len(tris), -1),
            ],
            axis=1,
        )
        _, first, inverse = np.unique(
            np.round(features, 12), axis=0, return_index=True, return_inverse=True
        )
        self.class_ids = inverse.reshape(-1)
        self.classes: list[_ElementClass] = []
        for t in first:
            basis = self._build(int(t))
            pts = self.rule.physical_points(coords[t])
            self.classes.append(
                _ElementClass(
                    coeffs=basis.coeffs,
                    scale=basis.scale,
                    values=basis.values(pts),
                    gradients=basis.gradients(pts),
                )
            )
        self.cell_dofs = (3 * mesh.tri_to_edges[:, :, None] + np.arange(3)).reshape(-1, 9)
        logger.debug(
            "MTW space: %d triangles in %d translation classes", len(tris), len(self.classes)
        )

    @property
    def n_dofs(self) -> int:
        return 3 * self.mesh.n_edges

    def _build(self, t: int) -> MtwLocalBasis:
        return mtw_local_basis(
            self.mesh.triangle_coords(t),
            self.edge_starts[t],
            self.edge_ends[t],
            self.edge_normals[t],
        )

    def local_basis(self, t: int) -> MtwLocalBasis:
        cls = self.classes[self.class_ids[t]]
        return MtwLocalBasis(coeffs=cls.coeffs, center=self.centroids[t], scale=cls.scale)

    def class_members(self):
        """Yield (class, triangle indices) pairs."""
        for c, cls in enumerate(self.classes):
            yield cls, np.flatnonzero(self.class_ids == c)

    def interpolate(self, field: VectorField) -> np.ndarray:
        """Edge-moment interpolant of ``field(x, y) -> (..., 2)`` as a full DOF vector."""
        mesh = self.mesh
        rule = edge_quadrature(DEFAULT_DEGREE)
        a = mesh.vertices[mesh.edges[:, 0]]
        b = mesh.vertices[mesh.edges[:, 1]]
        pts = a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]
        vals = np.asarray(field(pts[..., 0], pts[..., 1]), dtype=float)
        vn = np.einsum("eqc,ec->eq", vals, mesh.edge_normals)
        vt = np.einsum("eqc,ec->eq", vals, mesh.edge_tangents)
        dofs = np.empty((mesh.n_edges, 3))
        dofs[:, 0] = vn @ rule.weights
        dofs[:, 1] = vn @ (rule.weights * (rule.points - 0.5))
        dofs[:, 2] = vt @ rule.weights
        return dofs.ravel()

    def evaluate(self, coeffs: np.ndarray, t: int, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Value (n, 2) and Jacobian (n, 2, 2) of a full-vector field on triangle t."""
        values, grads = mtw_eval(self.local_basis(t), points)
        local = coeffs[self.cell_dofs[t]]
        return (
            np.einsum("j,njc->nc", local, values),
            np.einsum("j,njcd->ncd", local, grads),
        )

    def quadrature_values(self, coeffs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Field values (nt, nq, 2) and Jacobians (nt, nq, 2, 2) at the triangle rule."""
        nt, nq = self.mesh.n_triangles, self.rule.n_points
        values = np.empty((nt, nq, 2))
        grads = np.empty((nt, nq, 2, 2))
        for cls, members in self.class_members():
            local = coeffs[self.cell_dofs[members]]
            values[members] = np.einsum("tj,qjc->tqc", local, cls.values)
            grads[members] = np.einsum("tj,qjcd->tqcd", local, cls.gradients)
        return values, grads
