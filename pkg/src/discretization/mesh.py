"""
Structured triangulations of the unit square with full edge topology.

Each of the N x N subsquares is split along its lower-left to upper-right
diagonal. Edges are stored as sorted vertex pairs; an interior edge is owned
by its adjacent triangle of smaller index (T_+), whose outward normal is the
global edge normal.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Tuple, Union

import numpy as np

from src.utils.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

RegionSpec = Union[str, Sequence[str], Callable[[np.ndarray, np.ndarray], np.ndarray], None]

_SIDE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh:
    """Affine triangulation of [0,1]^2 with edge/adjacency tables."""

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_to_tris: np.ndarray
    tri_to_edges: np.ndarray
    tri_edge_signs: np.ndarray
    edge_lengths: np.ndarray = field(repr=False)
    edge_normals: np.ndarray = field(repr=False)
    edge_tangents: np.ndarray = field(repr=False)
    edge_midpoints: np.ndarray = field(repr=False)
    areas: np.ndarray = field(repr=False)
    N: int = 0

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def h_max(self) -> float:
        return float(self.edge_lengths.max())

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_to_tris[:, 1] >= 0)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_to_tris[:, 1] < 0)

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def triangle_coords(self, t: int) -> np.ndarray:
        return self.vertices[self.triangles[t]]


@dataclass(frozen=True, eq=False)
class BoundaryTags:
    """Per-edge membership in the two boundary partitions.

    All masks have one entry per mesh edge and are False on interior edges.
    """

    gamma_d: np.ndarray
    gamma_t: np.ndarray
    gamma_p: np.ndarray
    gamma_f: np.ndarray

    def counts(self) -> dict:
        return {
            "gamma_d": int(self.gamma_d.sum()),
            "gamma_t": int(self.gamma_t.sum()),
            "gamma_p": int(self.gamma_p.sum()),
            "gamma_f": int(self.gamma_f.sum()),
        }


def _outward_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Unit outward normals of the local edges (k opposite vertex k), shape (nt, 3, 2)."""
    normals = np.empty((triangles.shape[0], 3, 2))
    for k in range(3):
        a = vertices[triangles[:, (k + 1) % 3]]
        b = vertices[triangles[:, (k + 2) % 3]]
        d = b - a
        length = np.hypot(d[:, 0], d[:, 1])
        normals[:, k, 0] = d[:, 1] / length
        normals[:, k, 1] = -d[:, 0] / length
    return normals


def build_mesh(vertices: np.ndarray, triangles: np.ndarray, N: int = 0) -> Mesh:
    """Build the edge topology for counterclockwise triangles."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    nt = triangles.shape[0]

    local = np.stack(
        [triangles[:, [(k + 1) % 3, (k + 2) % 3]] for k in range(3)], axis=1
    ).reshape(-1, 2)
    edges, inverse = np.unique(np.sort(local, axis=1), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    ne = edges.shape[0]
    tri_to_edges = inverse.reshape(nt, 3)

    order = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=ne)
    if counts.max() > 2:
        raise ConfigurationError("non-manifold triangulation: an edge has more than 2 triangles")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    owners = order // 3
    edge_to_tris = np.full((ne, 2), -1, dtype=np.int64)
    edge_to_tris[:, 0] = owners[starts]
    shared = counts == 2
    edge_to_tris[shared, 1] = owners[starts[shared] + 1]

    outward = _outward_normals(vertices, triangles)
    edge_normals = outward.reshape(-1, 2)[order[starts]]
    tri_ids = np.repeat(np.arange(nt), 3)
    tri_edge_signs = np.where(edge_to_tris[inverse, 0] == tri_ids, 1, -1).reshape(nt, 3)

    d = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    edge_lengths = np.hypot(d[:, 0], d[:, 1])
    edge_tangents = d / edge_lengths[:, None]
    edge_midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])

    p = vertices[triangles]
    areas = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    if np.any(areas <= 0.0):
        bad = int(np.flatnonzero(areas <= 0.0)[0])
        raise ConfigurationError(f"triangle {bad} is not counterclockwise")

    for arr in (
        vertices, triangles, edges, edge_to_tris, tri_to_edges, tri_edge_signs,
        edge_lengths, edge_normals, edge_tangents, edge_midpoints, areas,
    ):
        arr.setflags(write=False)

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        edge_to_tris=edge_to_tris,
        tri_to_edges=tri_to_edges,
        tri_edge_signs=tri_edge_signs,
        edge_lengths=edge_lengths,
        edge_normals=edge_normals,
        edge_tangents=edge_tangents,
        edge_midpoints=edge_midpoints,
        areas=areas,
        N=N,
    )


def build_structured_mesh(N: int) -> Mesh:
    """
    Build the N x N structured triangulation of the unit square.

    Parameters
    ----------
    N : int
        Number of subsquares per side, N >= 1.

    Returns
    -------
    Mesh
        (N+1)^2 vertices, 2N^2 triangles and 3N^2 + 2N edges.
    """
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise ConfigurationError(f"mesh size N must be a positive integer, got {N!r}")
    N = int(N)
    ticks = np.linspace(0.0, 1.0, N + 1)
    xx, yy = np.meshgrid(ticks, ticks)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    j, i = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    ll = (i + j * (N + 1)).ravel()
    lr = ll + 1
    ul = ll + N + 1
    ur = ul + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)

    mesh = build_mesh(vertices, triangles, N=N)
    logger.debug(
        "structured mesh N=%d: %d vertices, %d triangles, %d edges",
        N, mesh.n_vertices, mesh.n_triangles, mesh.n_edges,
    )
    return mesh


def _side_mask(name: str, mid: np.ndarray) -> np.ndarray:
    x, y = mid[:, 0], mid[:, 1]
    sides = {
        "left": np.abs(x) < _SIDE_TOL,
        "right": np.abs(x - 1.0) < _SIDE_TOL,
        "bottom": np.abs(y) < _SIDE_TOL,
        "top": np.abs(y - 1.0) < _SIDE_TOL,
    }
    if name in ("boundary", "all"):
        return np.ones(mid.shape[0], dtype=bool)
    if name == "none":
        return np.zeros(mid.shape[0], dtype=bool)
    if name not in sides:
        raise ConfigurationError(
            f"unknown boundary region {name!r}; use left, right, bottom, top, boundary or none"
        )
    return sides[name]


def select_boundary(mesh: Mesh, spec: RegionSpec) -> np.ndarray:
    """Edge mask of the boundary edges selected by a region descriptor.

    A descriptor is a side name, a comma-separated or listed union of side
    names, or a predicate on midpoint coordinates ``f(x, y) -> bool array``.
    """
    bnd = mesh.boundary_edges
    mid = mesh.edge_midpoints[bnd]
    if spec is None:
        picked = np.zeros(bnd.size, dtype=bool)
    elif callable(spec):
        picked = np.asarray(spec(mid[:, 0], mid[:, 1]), dtype=bool)
    else:
        names = spec.split(",") if isinstance(spec, str) else list(spec)
        picked = np.zeros(bnd.size, dtype=bool)
        for name in names:
            picked |= _side_mask(name.strip().lower(), mid)
    mask = np.zeros(mesh.n_edges, dtype=bool)
    mask[bnd[picked]] = True
    return mask


def classify_boundary(
    mesh: Mesh, gamma_d_spec: RegionSpec = "left", gamma_p_spec: RegionSpec = "boundary"
) -> BoundaryTags:
    """Tag boundary edges with Γ_d/Γ_t and Γ_p/Γ_f; the complements fill ∂Ω."""
    boundary = np.zeros(mesh.n_edges, dtype=bool)
    boundary[mesh.boundary_edges] = True
    gamma_d = select_boundary(mesh, gamma_d_spec)
    gamma_p = select_boundary(mesh, gamma_p_spec)
    if not gamma_d.any():
        raise ConfigurationError(f"Γ_d descriptor {gamma_d_spec!r} selects no boundary edge")
    if not gamma_p.any():
        raise ConfigurationError(f"Γ_p descriptor {gamma_p_spec!r} selects no boundary edge")
    tags = BoundaryTags(
        gamma_d=gamma_d,
        gamma_t=boundary & ~gamma_d,
        gamma_p=gamma_p,
        gamma_f=boundary & ~gamma_p,
    )
    logger.debug("boundary tags: %s", tags.counts())
    return tags


def edge_geometry(mesh: Mesh, edge: int) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Length, unit normal, unit tangent and midpoint of an edge."""
    return (
        float(mesh.edge_lengths[edge]),
        mesh.edge_normals[edge].copy(),
        mesh.edge_tangents[edge].copy(),
        mesh.edge_midpoints[edge].copy(),
    )


def check_topology(mesh: Mesh) -> list[str]:
    """Return a list of violated mesh invariants (empty when consistent)."""
    errors: list[str] = []
    euler = mesh.n_vertices - mesh.n_edges + mesh.n_triangles
    if euler != 1:
        errors.append(f"Euler characteristic {euler} != 1")
    if mesh.N:
        N = mesh.N
        expected = ((N + 1) ** 2, 2 * N * N, 3 * N * N + 2 * N)
        got = (mesh.n_vertices, mesh.n_triangles, mesh.n_edges)
        if got != expected:
            errors.append(f"entity counts {got} != {expected}")
    if abs(float(mesh.areas.sum()) - 1.0) > 1e-14:
        errors.append(f"total area {mesh.areas.sum():.16f} != 1")
    for t in np.flatnonzero(mesh.areas <= 0.0):
        errors.append(f"triangle {t} has non-positive signed area")

    for t in range(mesh.n_triangles):
        for k in range(3):
            e = mesh.tri_to_edges[t, k]
            if t not in mesh.edge_to_tris[e]:
                errors.append(f"edge {e} does not list triangle {t}")
            pair = sorted(
                (mesh.triangles[t, (k + 1) % 3], mesh.triangles[t, (k + 2) % 3])
            )
            if list(mesh.edges[e]) != pair:
                errors.append(f"local edge {k} of triangle {t} is not opposite vertex {k}")
    for e in range(mesh.n_edges):
        for t in mesh.edge_to_tris[e]:
            if t >= 0 and e not in mesh.tri_to_edges[t]:
                errors.append(f"triangle {t} does not list edge {e}")

    outward = _outward_normals(mesh.vertices, mesh.triangles)
    for e in mesh.interior_edges:
        t_minus = mesh.edge_to_tris[e, 1]
        k = int(np.flatnonzero(mesh.tri_to_edges[t_minus] == e)[0])
        if not np.allclose(mesh.edge_normals[e], -outward[t_minus, k], atol=1e-14):
            errors.append(f"normal of interior edge {e} is not the inward normal of T_-")
    return errors


def write_mesh_text(mesh: Mesh, path: Path) -> None:
    """Dump vertices, triangles and edges in a plain-text debugging format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        handle.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            handle.write(f"{x:.17g} {y:.17g}\n")
        handle.write(f"triangles {mesh.n_triangles}\n")
        for a, b, c in mesh.triangles:
            handle.write(f"{a} {b} {c}\n")
        handle.write(f"edges {mesh.n_edges}\n")
        for (v0, v1), (tp, tm) in zip(mesh.edges, mesh.edge_to_tris):
            handle.write(f"{v0} {v1} {tp} {tm}\n")
    logger.info("wrote mesh dump to %s", path)
