"""
Global numbering of displacement and pressure unknowns.

Displacement: three DOFs per edge (DOF 3e + k). All three DOFs of a Γ_d edge
are eliminated from the linear systems.

Pressure: one DOF per vertex (continuous block) followed by one DOF per
triangle (cell block). The coefficient vector (1 on vertices, -1 on cells)
represents the zero function, so the linear systems also drop the last cell
DOF, which is held at zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.discretization.elements import MtwSpace
from src.discretization.mesh import BoundaryTags, Mesh


@dataclass(frozen=True, eq=False)
class DofHandler:
    mesh: Mesh
    tags: BoundaryTags
    space: MtwSpace
    u_free: np.ndarray
    u_constrained: np.ndarray
    p_free: np.ndarray
    p_gauge: int

    @classmethod
    def build(cls, mesh: Mesh, tags: BoundaryTags, space: MtwSpace | None = None) -> "DofHandler":
        space = space if space is not None else MtwSpace(mesh)
        constrained_edges = np.flatnonzero(tags.gamma_d)
        u_constrained = (3 * constrained_edges[:, None] + np.arange(3)).ravel()
        mask = np.ones(3 * mesh.n_edges, dtype=bool)
        mask[u_constrained] = False
        n_p = mesh.n_vertices + mesh.n_triangles
        p_gauge = n_p - 1
        return cls(
            mesh=mesh,
            tags=tags,
            space=space,
            u_free=np.flatnonzero(mask),
            u_constrained=u_constrained,
            p_free=np.arange(p_gauge),
            p_gauge=p_gauge,
        )

    @property
    def n_u_full(self) -> int:
        return 3 * self.mesh.n_edges

    @property
    def n_u(self) -> int:
        return int(self.u_free.size)

    @property
    def n_pc(self) -> int:
        return self.mesh.n_vertices

    @property
    def n_p0(self) -> int:
        return self.mesh.n_triangles

    @property
    def n_p(self) -> int:
        return self.n_pc + self.n_p0

    @property
    def n_p_free(self) -> int:
        return int(self.p_free.size)

    @property
    def system_size(self) -> int:
        return self.n_u + self.n_p_free

    @property
    def offsets(self) -> Tuple[int, int, int, int]:
        """Start of the u, p^c and p^0 blocks and the end of the system vector."""
        return (0, self.n_u, self.n_u + self.n_pc, self.system_size)

    @property
    def cell_u_dofs(self) -> np.ndarray:
        return self.space.cell_dofs

    @property
    def cell_p_dofs(self) -> np.ndarray:
        """Vertex DOFs of each triangle followed by its cell DOF, shape (nt, 4)."""
        cells = self.n_pc + np.arange(self.n_p0)
        return np.column_stack([self.mesh.triangles, cells])

    def prolong_u(self, u: np.ndarray) -> np.ndarray:
        full = np.zeros(self.n_u_full)
        full[self.u_free] = u
        return full

    def restrict_u(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full)[self.u_free]

    def prolong_p(self, p: np.ndarray) -> np.ndarray:
        full = np.zeros(self.n_p)
        full[self.p_free] = p
        return full

    def restrict_p(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full)[self.p_free]

    def gauge_fix(self, p_full: np.ndarray) -> np.ndarray:
        """Shift a pressure vector along the null representation so the gauge DOF is zero."""
        p_full = np.array(p_full, dtype=float)
        shift = p_full[self.p_gauge]
        p_full[: self.n_pc] += shift
        p_full[self.n_pc :] -= shift
        return p_full

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """System vector to (u on free DOFs, full pressure vector)."""
        return x[: self.n_u], self.prolong_p(x[self.n_u :])

    def join(self, u: np.ndarray, p_full: np.ndarray) -> np.ndarray:
        return np.concatenate([u, self.restrict_p(self.gauge_fix(p_full))])
