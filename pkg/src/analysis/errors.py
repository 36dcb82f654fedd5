"""Relative discretization errors of a discrete state against a closed-form solution."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from src.analysis.manufactured import ExactSolution
from src.analysis.timestepping import StepState
from src.discretization.dofs import DofHandler
from src.discretization.elements import barycentric_gradients
from src.discretization.params import ModelParams

NORMS = ("u_energy", "u_h1", "u_l2", "p_h1", "p_l2")


@dataclass(frozen=True)
class ErrorNorms:
    """Five errors; relative unless ``zero_norm`` is set, then absolute."""

    u_energy: float
    u_h1: float
    u_l2: float
    p_h1: float
    p_l2: float
    zero_norm: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def _energy_density(grad: np.ndarray, params: ModelParams) -> np.ndarray:
    eps = 0.5 * (grad + np.swapaxes(grad, -1, -2))
    div = grad[..., 0, 0] + grad[..., 1, 1]
    return 2.0 * params.mu * np.einsum("...cd,...cd->...", eps, eps) + params.lam * div**2


def _ratio(err2: float, ref2: float, absolute: bool) -> float:
    err = math.sqrt(max(err2, 0.0))
    return err if absolute else err / math.sqrt(ref2)


def field_errors(
    u_coeffs: np.ndarray,
    p_coeffs: np.ndarray,
    t: float,
    exact: ExactSolution,
    dofs: DofHandler,
    params: ModelParams,
) -> ErrorNorms:
    """
    Energy, broken H1 and L2 errors of u and H1, L2 errors of p at time t.

    Integrals use the degree-6 triangle rule of the displacement space. The
    pressure H1 error uses the elementwise gradient of p_h^c + p_h^0. When any
    exact norm vanishes all five values are absolute and ``zero_norm`` is set.
    """
    mesh = dofs.mesh
    rule = dofs.space.rule
    weights = 2.0 * mesh.areas[:, None] * rule.weights[None, :]
    pts = rule.physical_points(mesh.vertices[mesh.triangles])
    x, y = pts[..., 0], pts[..., 1]

    uh, guh = dofs.space.quadrature_values(dofs.prolong_u(u_coeffs))
    u = np.asarray(exact.u(x, y, t), dtype=float)
    gu = np.asarray(exact.grad_u(x, y, t), dtype=float)
    eu, egu = u - uh, gu - guh

    p_full = np.asarray(p_coeffs, dtype=float)
    vertex = p_full[mesh.triangles]
    ph = vertex @ rule.points.T + p_full[dofs.n_pc :][:, None]
    gph = np.einsum("ta,tad->td", vertex, barycentric_gradients(mesh.vertices[mesh.triangles]))
    p = np.broadcast_to(np.asarray(exact.p(x, y, t), dtype=float), x.shape)
    gp = np.asarray(exact.grad_p(x, y, t), dtype=float)
    ep, egp = p - ph, gp - gph[:, None, :]

    def integrate(density: np.ndarray) -> float:
        return float(np.sum(weights * density))

    u_l2 = (integrate(np.sum(eu**2, axis=-1)), integrate(np.sum(u**2, axis=-1)))
    u_grad = (integrate(np.sum(egu**2, axis=(-2, -1))), integrate(np.sum(gu**2, axis=(-2, -1))))
    u_energy = (integrate(_energy_density(egu, params)), integrate(_energy_density(gu, params)))
    p_l2 = (integrate(ep**2), integrate(p**2))
    p_grad = (integrate(np.sum(egp**2, axis=-1)), integrate(np.sum(gp**2, axis=-1)))

    refs = (u_energy[1], u_grad[1] + u_l2[1], u_l2[1], p_grad[1] + p_l2[1], p_l2[1])
    absolute = any(r <= 0.0 for r in refs)
    return ErrorNorms(
        u_energy=_ratio(u_energy[0], refs[0], absolute),
        u_h1=_ratio(u_grad[0] + u_l2[0], refs[1], absolute),
        u_l2=_ratio(u_l2[0], refs[2], absolute),
        p_h1=_ratio(p_grad[0] + p_l2[0], refs[3], absolute),
        p_l2=_ratio(p_l2[0], refs[4], absolute),
        zero_norm=absolute,
    )


def compute_errors(
    state: StepState, exact: ExactSolution, dofs: DofHandler, params: ModelParams
) -> ErrorNorms:
    """Errors of a time-stepping state at its own time."""
    return field_errors(state.u_coeffs, state.p_coeffs, state.t, exact, dofs, params)
