"""Quadrature rules on the reference triangle and on the unit interval."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations

import numpy as np
from numpy.polynomial.legendre import leggauss

from src.utils.exceptions import ConfigurationError

MAX_DEGREE = 12
DEFAULT_DEGREE = 6


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Barycentric points and weights on the reference triangle (area 1/2)."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def n_points(self) -> int:
        return int(self.weights.size)

    def physical_points(self, tri_xy: np.ndarray) -> np.ndarray:
        """Map to physical coordinates; ``tri_xy`` is (3, 2) or (nt, 3, 2)."""
        return np.einsum("qa,...ad->...qd", self.points, tri_xy)


@dataclass(frozen=True, eq=False)
class EdgeRule:
    """Points s in [0, 1] and weights summing to 1."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def n_points(self) -> int:
        return int(self.weights.size)


def _gauss_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _check_degree(degree: int) -> int:
    if isinstance(degree, bool) or not isinstance(degree, (int, np.integer)):
        raise ConfigurationError(f"quadrature degree must be an integer, got {degree!r}")
    if degree < 0 or degree > MAX_DEGREE:
        raise ConfigurationError(
            f"unsupported quadrature degree {degree}; supported range is 0..{MAX_DEGREE}"
        )
    return int(degree)


@lru_cache(maxsize=None)
def triangle_quadrature(degree: int = DEFAULT_DEGREE) -> QuadratureRule:
    """
    Symmetric rule on the reference triangle exact for polynomials of the given degree.

    A collapsed Gauss-Legendre product rule (exact by construction) averaged
    over the six permutations of the barycentric coordinates.
    """
    degree = _check_degree(degree)
    # the collapse adds a factor (1 - u), one degree more in u
    n = (degree + 1) // 2 + 1
    s, ws = _gauss_01(n)
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(ws, ws, indexing="ij")
    x = u.ravel()
    y = (v * (1.0 - u)).ravel()
    w = (wu * wv * (1.0 - u)).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])

    points = np.concatenate([bary[:, list(perm)] for perm in permutations(range(3))])
    weights = np.tile(w, 6) / 6.0
    points.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(points=points, weights=weights, degree=degree)


@lru_cache(maxsize=None)
def edge_quadrature(degree: int = DEFAULT_DEGREE) -> EdgeRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of the given degree."""
    degree = _check_degree(degree)
    points, weights = _gauss_01(degree // 2 + 1)
    points.setflags(write=False)
    weights.setflags(write=False)
    return EdgeRule(points=points, weights=weights, degree=degree)
