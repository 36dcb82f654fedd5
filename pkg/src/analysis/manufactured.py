"""
Manufactured solution of the Biot system on the unit square and its loads.

    u = (-pi A(x) B(y) cos 2t, -pi A(y) B(x) cos 2t)
    p = x (1 - x) y (1 - y) cos t

with A(s) = s^2 (1 - s)^2 and B(s) = sin^2(pi s). The loads

    f = -mu lap u - (mu + lam) grad div u + alpha grad p
    g = s0 p_t + alpha div u_t - div(kappa grad p)

are stored in closed form and checked against finite differences in the tests.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from src.discretization.params import ModelParams

Field = Callable[[np.ndarray, np.ndarray, float], np.ndarray]

PI = np.pi


def _A(s):
    return s**2 * (1.0 - s) ** 2


def _dA(s):
    return 2.0 * s * (1.0 - s) * (1.0 - 2.0 * s)


def _d2A(s):
    return 2.0 * (1.0 - 6.0 * s + 6.0 * s**2)


def _B(s):
    return np.sin(PI * s) ** 2


def _dB(s):
    return PI * np.sin(2.0 * PI * s)


def _d2B(s):
    return 2.0 * PI**2 * np.cos(2.0 * PI * s)


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """Closed-form fields ``field(x, y, t)``.

    Vector fields return shape (..., 2); ``grad_u`` returns (..., 2, 2) with
    entry [c, d] = d u_c / d x_d.
    """

    u: Field
    grad_u: Field
    p: Field
    grad_p: Field
    p_t: Field
    div_u_t: Field
    f: Field
    g: Field

    def frozen(self, t0: float) -> "ExactSolution":
        """The same fields evaluated at t0 for every t; time derivatives become zero."""

        def _at(field: Field) -> Field:
            return lambda x, y, t: field(x, y, t0)

        def _zero(x, y, t):
            return np.zeros(np.shape(x))

        return ExactSolution(
            u=_at(self.u),
            grad_u=_at(self.grad_u),
            p=_at(self.p),
            grad_p=_at(self.grad_p),
            p_t=_zero,
            div_u_t=_zero,
            f=_at(self.f),
            g=_at(self.g),
        )


def zero_solution() -> ExactSolution:
    def scalar(x, y, t):
        return np.zeros(np.shape(x))

    def vector(x, y, t):
        return np.zeros(np.shape(x) + (2,))

    def tensor(x, y, t):
        return np.zeros(np.shape(x) + (2, 2))

    return ExactSolution(
        u=vector, grad_u=tensor, p=scalar, grad_p=vector,
        p_t=scalar, div_u_t=scalar, f=vector, g=scalar,
    )


def manufactured_loads(params: ModelParams) -> ExactSolution:
    """Manufactured (u, p) and the loads (f, g) matching ``params``."""
    mu, lam, alpha = params.mu, params.lam, float(params.alpha)
    K = params.kappa_matrix
    k11, k22 = K[0, 0], K[1, 1]
    k_mixed = K[0, 1] + K[1, 0]

    def u(x, y, t):
        c = -PI * np.cos(2.0 * t)
        return np.stack([c * _A(x) * _B(y), c * _A(y) * _B(x)], axis=-1)

    def grad_u(x, y, t):
        c = -PI * np.cos(2.0 * t)
        row1 = np.stack([c * _dA(x) * _B(y), c * _A(x) * _dB(y)], axis=-1)
        row2 = np.stack([c * _A(y) * _dB(x), c * _dA(y) * _B(x)], axis=-1)
        return np.stack([row1, row2], axis=-2)

    def p(x, y, t):
        return x * (1.0 - x) * y * (1.0 - y) * np.cos(t)

    def grad_p(x, y, t):
        c = np.cos(t)
        return np.stack(
            [(1.0 - 2.0 * x) * y * (1.0 - y) * c, x * (1.0 - x) * (1.0 - 2.0 * y) * c], axis=-1
        )

    def p_t(x, y, t):
        return -x * (1.0 - x) * y * (1.0 - y) * np.sin(t)

    def div_u_t(x, y, t):
        return 2.0 * PI * np.sin(2.0 * t) * (_dA(x) * _B(y) + _dA(y) * _B(x))

    def f(x, y, t):
        c = -PI * np.cos(2.0 * t)
        lap1 = c * (_d2A(x) * _B(y) + _A(x) * _d2B(y))
        lap2 = c * (_A(y) * _d2B(x) + _d2A(y) * _B(x))
        gdiv1 = c * (_d2A(x) * _B(y) + _dA(y) * _dB(x))
        gdiv2 = c * (_dA(x) * _dB(y) + _d2A(y) * _B(x))
        gp = grad_p(x, y, t)
        f1 = -mu * lap1 - (mu + lam) * gdiv1 + alpha * gp[..., 0]
        f2 = -mu * lap2 - (mu + lam) * gdiv2 + alpha * gp[..., 1]
        return np.stack([f1, f2], axis=-1)

    def g(x, y, t):
        c = np.cos(t)
        p_xx = -2.0 * y * (1.0 - y) * c
        p_yy = -2.0 * x * (1.0 - x) * c
        p_xy = (1.0 - 2.0 * x) * (1.0 - 2.0 * y) * c
        div_flux = k11 * p_xx + k_mixed * p_xy + k22 * p_yy
        return params.s0_at(x, y) * p_t(x, y, t) + alpha * div_u_t(x, y, t) - div_flux

    return ExactSolution(
        u=u, grad_u=grad_u, p=p, grad_p=grad_p, p_t=p_t, div_u_t=div_u_t, f=f, g=g
    )
