from __future__ import annotations

import numpy as np
import pytest

from src.discretization.quadrature import MAX_DEGREE, edge_quadrature, triangle_quadrature
from src.utils.exceptions import ConfigurationError


def _integrate(rule, fn):
    x, y = rule.points[:, 1], rule.points[:, 2]
    return float(rule.weights @ fn(x, y))


@pytest.mark.parametrize(
    "degree, fn, expected",
    [
        (0, lambda x, y: np.ones_like(x), 0.5),
        (4, lambda x, y: x**2 * y**2, 1.0 / 180.0),
        (6, lambda x, y: x**3 * y**3, 1.0 / 1120.0),
        (6, lambda x, y: x**6, 1.0 / 56.0),
    ],
)
def test_triangle_moments(degree, fn, expected):
    assert _integrate(triangle_quadrature(degree), fn) == pytest.approx(expected, rel=1e-13)


def test_triangle_rule_is_symmetric():
    rule = triangle_quadrature(6)
    np.testing.assert_allclose(rule.points.sum(axis=1), 1.0)
    assert np.all(rule.weights > 0.0)
    moments = [
        float(rule.weights @ (rule.points[:, i] ** 5 * rule.points[:, j]))
        for i, j in ((0, 1), (1, 2), (2, 0), (1, 0))
    ]
    np.testing.assert_allclose(moments, 1.0 / 336.0, rtol=1e-13)


def test_physical_points_map_vertices():
    rule = triangle_quadrature(2)
    tri = np.array([[1.0, 1.0], [3.0, 1.0], [1.0, 2.0]])
    pts = rule.physical_points(tri)
    assert pts.shape == (rule.n_points, 2)
    np.testing.assert_allclose(pts.mean(axis=0), tri.mean(axis=0))


@pytest.mark.parametrize(
    "degree, power, expected",
    [(0, 0, 1.0), (2, 2, 1.0 / 3.0), (6, 6, 1.0 / 7.0), (12, 11, 1.0 / 12.0)],
)
def test_edge_moments(degree, power, expected):
    rule = edge_quadrature(degree)
    assert float(rule.weights @ rule.points**power) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("degree", [-1, MAX_DEGREE + 1, 2.5])
def test_unsupported_degree(degree):
    with pytest.raises(ConfigurationError):
        triangle_quadrature(degree)
    with pytest.raises(ConfigurationError):
        edge_quadrature(degree)
