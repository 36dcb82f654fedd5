from __future__ import annotations

import numpy as np
import pytest

from src.discretization.elements import (
    LOCAL_DIM,
    MtwSpace,
    barycentric_gradients,
    eg_eval,
    mtw_eval,
    mtw_local_basis,
)
from src.discretization.mesh import build_structured_mesh
from src.discretization.quadrature import edge_quadrature
from src.utils.exceptions import ElementConstructionError

TRIANGLES = [
    np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    np.array([[0.2, 0.1], [0.45, 0.3], [0.1, 0.5]]),
    np.array([[0.0, 0.0], [0.25, 0.25], [0.0, 0.25]]),
]


def _moments(basis, tri):
    """The nine edge functionals applied to the nine basis functions."""
    rule = edge_quadrature(6)
    s, w = rule.points, rule.weights
    rows = []
    for k in range(3):
        a, b = tri[(k + 1) % 3], tri[(k + 2) % 3]
        d = b - a
        tangent = d / np.linalg.norm(d)
        normal = np.array([tangent[1], -tangent[0]])
        values = basis.values(a + s[:, None] * d)
        vn = values @ normal
        vt = values @ tangent
        rows += [w @ vn, (w * (s - 0.5)) @ vn, w @ vt]
    return np.array(rows)


@pytest.mark.parametrize("tri", TRIANGLES)
def test_dual_basis(tri):
    basis = mtw_local_basis(tri)
    np.testing.assert_allclose(_moments(basis, tri), np.eye(LOCAL_DIM), atol=1e-10)


@pytest.mark.parametrize("tri", TRIANGLES)
def test_divergence_is_constant_and_traces_linear(tri, rng):
    basis = mtw_local_basis(tri)
    lam = rng.dirichlet(np.ones(3), size=12)
    _, grads = mtw_eval(basis, lam @ tri)
    div = grads[..., 0, 0] + grads[..., 1, 1]
    np.testing.assert_allclose(div, np.broadcast_to(div[0], div.shape), atol=1e-10)

    a, b = tri[1], tri[2]
    d = b - a
    normal = np.array([d[1], -d[0]]) / np.linalg.norm(d)
    s = np.linspace(0.0, 1.0, 7)
    vn = basis.values(a + s[:, None] * d) @ normal
    fit = np.polynomial.polynomial.polyfit(s, vn, 1)
    residual = vn - np.polynomial.polynomial.polyval(s, fit).T
    assert np.abs(residual).max() < 1e-10


def test_degenerate_triangle_is_rejected():
    with pytest.raises(ElementConstructionError):
        mtw_local_basis(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))


def test_hat_functions():
    tri = TRIANGLES[0]
    values, grads = eg_eval(tri, tri)
    np.testing.assert_allclose(values[:, :3], np.eye(3), atol=1e-15)
    np.testing.assert_allclose(values[:, 3], 1.0)
    np.testing.assert_allclose(grads[:, 3], 0.0)

    values, _ = eg_eval(tri, tri.mean(axis=0))
    np.testing.assert_allclose(values[0, :3], 1.0 / 3.0)

    np.testing.assert_allclose(barycentric_gradients(tri), [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def test_hats_sum_to_one(rng):
    tri = TRIANGLES[1]
    pts = rng.dirichlet(np.ones(3), size=20) @ tri
    values, grads = eg_eval(tri, pts)
    np.testing.assert_allclose(values[:, :3].sum(axis=1), 1.0)
    np.testing.assert_allclose(grads[:, :3].sum(axis=1), 0.0, atol=1e-13)


def test_space_reproduces_linear_fields():
    mesh = build_structured_mesh(3)
    space = MtwSpace(mesh)

    def field(x, y):
        return np.stack([1.0 + 2.0 * x - y, 0.5 * x + 3.0 * y], axis=-1)

    values, grads = space.quadrature_values(space.interpolate(field))
    pts = space.rule.physical_points(mesh.vertices[mesh.triangles])
    np.testing.assert_allclose(values, field(pts[..., 0], pts[..., 1]), atol=1e-11)
    np.testing.assert_allclose(grads, np.broadcast_to([[2.0, -1.0], [0.5, 3.0]], grads.shape), atol=1e-10)


def test_translation_classes_are_shared():
    mesh = build_structured_mesh(6)
    space = MtwSpace(mesh)
    assert len(space.classes) <= 4
    assert space.cell_dofs.shape == (mesh.n_triangles, 9)
    members = np.concatenate([m for _, m in space.class_members()])
    np.testing.assert_array_equal(np.sort(members), np.arange(mesh.n_triangles))


def test_evaluate_matches_quadrature_values():
    mesh = build_structured_mesh(2)
    space = MtwSpace(mesh)
    coeffs = np.random.default_rng(5).standard_normal(space.n_dofs)
    values, grads = space.quadrature_values(coeffs)
    t = 3
    pts = space.rule.physical_points(mesh.triangle_coords(t))
    v, g = space.evaluate(coeffs, t, pts)
    np.testing.assert_allclose(v, values[t], atol=1e-12)
    np.testing.assert_allclose(g, grads[t], atol=1e-11)
