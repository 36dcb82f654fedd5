from __future__ import annotations

import numpy as np
import pytest

from src.analysis.timestepping import build_problem
from src.discretization.dofs import DofHandler
from src.discretization.forms import assemble_forms
from src.discretization.mesh import BoundaryTags, build_structured_mesh, classify_boundary
from src.discretization.params import ModelParams


def _unconstrained(N: int) -> DofHandler:
    mesh = build_structured_mesh(N)
    boundary = np.zeros(mesh.n_edges, dtype=bool)
    boundary[mesh.boundary_edges] = True
    tags = BoundaryTags(
        gamma_d=np.zeros(mesh.n_edges, dtype=bool),
        gamma_t=boundary,
        gamma_p=boundary.copy(),
        gamma_f=np.zeros(mesh.n_edges, dtype=bool),
    )
    return DofHandler.build(mesh, tags)


@pytest.fixture
def unconstrained_dofs():
    """Factory of DofHandlers with no clamped edges; classify_boundary refuses an empty Γ_d."""
    return _unconstrained


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return ModelParams()


@pytest.fixture
def unit_lambda_params():
    """E = 2.5, nu = 1/4 gives lam = mu = 1."""
    return ModelParams(E=2.5, nu=0.25, gamma=10.0, beta=1.0, C1=1.0, dt=0.1)


@pytest.fixture
def one_square():
    mesh = build_structured_mesh(1)
    return DofHandler.build(mesh, classify_boundary(mesh))


@pytest.fixture
def dofs4():
    mesh = build_structured_mesh(4)
    return DofHandler.build(mesh, classify_boundary(mesh))


@pytest.fixture
def forms4(dofs4, params):
    return assemble_forms(dofs4, params)


@pytest.fixture
def problem4():
    return build_problem(ModelParams(beta=2.0, dt=1e-2), 4)
