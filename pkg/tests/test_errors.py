from __future__ import annotations

import math

import numpy as np
import pytest

from src.analysis.errors import NORMS, field_errors
from src.analysis.manufactured import manufactured_loads, zero_solution
from src.discretization.dofs import DofHandler
from src.discretization.mesh import build_structured_mesh, classify_boundary


def _dofs(N: int) -> DofHandler:
    mesh = build_structured_mesh(N)
    return DofHandler.build(mesh, classify_boundary(mesh))


def _interpolant(dofs: DofHandler, exact, t: float) -> tuple[np.ndarray, np.ndarray]:
    u = dofs.restrict_u(dofs.space.interpolate(lambda x, y: exact.u(x, y, t)))
    vx, vy = dofs.mesh.vertices[:, 0], dofs.mesh.vertices[:, 1]
    p = np.zeros(dofs.n_p)
    p[: dofs.n_pc] = exact.p(vx, vy, t)
    return u, p


def test_zero_state_has_unit_relative_error(dofs4, params):
    exact = manufactured_loads(params)
    errors = field_errors(np.zeros(dofs4.n_u), np.zeros(dofs4.n_p), 0.3, exact, dofs4, params)
    assert not errors.zero_norm
    for name in NORMS:
        assert getattr(errors, name) == pytest.approx(1.0, rel=1e-12)


def test_zero_reference_switches_to_absolute(dofs4, params, rng):
    u = rng.standard_normal(dofs4.n_u)
    errors = field_errors(u, np.zeros(dofs4.n_p), 0.0, zero_solution(), dofs4, params)
    assert errors.zero_norm
    assert errors.u_l2 > 0.0
    assert errors.p_l2 == 0.0
    assert set(errors.as_dict()) == set(NORMS) | {"zero_norm"}


def test_interpolation_errors_decrease(params):
    exact = manufactured_loads(params)
    results = []
    for N in (4, 8):
        dofs = _dofs(N)
        u, p = _interpolant(dofs, exact, 0.2)
        results.append(field_errors(u, p, 0.2, exact, dofs, params))
    assert math.log2(results[0].u_l2 / results[1].u_l2) > 1.5
    assert math.log2(results[0].u_energy / results[1].u_energy) > 0.8
    assert math.log2(results[0].p_l2 / results[1].p_l2) > 1.5
    assert results[1].u_energy < 1.0


def test_cell_constant_enters_pressure_error(dofs4, params):
    exact = manufactured_loads(params)
    u, p = _interpolant(dofs4, exact, 0.0)
    base = field_errors(u, p, 0.0, exact, dofs4, params)
    p[dofs4.n_pc :] = 0.5
    shifted = field_errors(u, p, 0.0, exact, dofs4, params)
    assert shifted.p_l2 > base.p_l2
    assert shifted.u_l2 == base.u_l2
