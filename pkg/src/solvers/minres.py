"""
Preconditioned MINRES for symmetric (indefinite) systems.

The recurrence is the Paige-Saunders Lanczos/Givens scheme as written in
scipy's minres, with the SPD preconditioner entering through P^{-1}
applications. ``phibar`` is the P^{-1}-norm of the current residual.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.utils.exceptions import Breakdown, NotConverged

logger = logging.getLogger(__name__)

Operator = Callable[[np.ndarray], np.ndarray]


@dataclass
class SolveReport:
    """Outcome of one MinRes solve."""

    iterations: int
    residual: float
    converged: bool
    wall_time: float
    initial_residual: float = 0.0
    correction_iterations: int = 0
    history: List[float] = field(default_factory=list)

    @property
    def relative_residual(self) -> float:
        if self.initial_residual == 0.0:
            return 0.0
        return self.residual / self.initial_residual


def _identity(r: np.ndarray) -> np.ndarray:
    return r.copy()


def minres(
    apply_A: Operator,
    apply_Pinv: Optional[Operator],
    b: np.ndarray,
    rtol: float = 1e-8,
    maxit: int = 1000,
    x0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, SolveReport]:
    """
    Solve A x = b with MINRES preconditioned by an SPD operator P.

    Parameters
    ----------
    apply_A : callable
        Product with the symmetric matrix A.
    apply_Pinv : callable or None
        Application of P^{-1}; None means P = I.
    b : ndarray
        Right-hand side.
    rtol : float
        Stop when ||b - A x||_{P^{-1}} <= rtol * ||b - A x0||_{P^{-1}}.
    maxit : int
        Iteration limit.

    Returns
    -------
    x, SolveReport

    Raises
    ------
    NotConverged
        When ``maxit`` iterations do not reach the tolerance.
    Breakdown
        When P is not positive definite or the Lanczos recurrence stalls.
    """
    start = time.perf_counter()
    apply_Pinv = apply_Pinv if apply_Pinv is not None else _identity
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    eps = np.finfo(float).eps

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r1 = b - apply_A(x) if x0 is not None else b.copy()
    y = apply_Pinv(r1)
    beta1 = float(r1 @ y)
    if beta1 < 0.0:
        raise Breakdown("preconditioner is not positive definite")
    beta1 = math.sqrt(beta1)
    history = [beta1]
    if beta1 == 0.0:
        report = SolveReport(0, 0.0, True, time.perf_counter() - start, 0.0, history)
        return x, report

    tol = rtol * beta1
    oldb = 0.0
    beta = beta1
    dbar = 0.0
    epsln = 0.0
    phibar = beta1
    cs = -1.0
    sn = 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1.copy()
    converged = False
    itn = 0

    while itn < maxit:
        itn += 1
        v = y / beta
        y = apply_A(v)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1 = r2
        r2 = y
        y = apply_Pinv(r2)
        oldb = beta
        beta = float(r2 @ y)
        if beta < 0.0:
            raise Breakdown(f"preconditioner is not positive definite (iteration {itn})")
        beta = math.sqrt(beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta

        gamma = max(math.hypot(gbar, beta), eps)
        cs = gbar / gamma
        sn = beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1 = w2
        w2 = w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w

        if phibar > history[-1] * (1.0 + 1e-12):
            raise Breakdown(f"residual increased at iteration {itn}")
        history.append(phibar)
        logger.debug("minres it=%d residual=%.3e", itn, phibar)
        if phibar <= tol:
            converged = True
            break
        if beta == 0.0:
            raise Breakdown(f"Lanczos recurrence stalled at iteration {itn}")

    report = SolveReport(
        iterations=itn,
        residual=phibar,
        converged=converged,
        wall_time=time.perf_counter() - start,
        initial_residual=beta1,
        history=history,
    )
    if not converged:
        raise NotConverged(x, report)
    return x, report
