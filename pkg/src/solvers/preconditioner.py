"""Block-diagonal preconditioner applied through exact SPD factorizations."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from src.discretization.forms import PreconditionerBlocks
from src.solvers.sparse import SpdFactorization, spd_factorize
from src.utils.exceptions import ConfigurationError, NotPositiveDefinite

logger = logging.getLogger(__name__)


def apply_block_preconditioner(
    P_V_fact: SpdFactorization,
    P_Qc_fact: SpdFactorization,
    P_Q0_fact: SpdFactorization,
    r: np.ndarray,
) -> np.ndarray:
    """Return (P_V^{-1} r_u, P_Qc^{-1} r_pc, P_Q0^{-1} r_p0) for a stacked residual."""
    n_u, n_c, n_0 = P_V_fact.n, P_Qc_fact.n, P_Q0_fact.n
    if r.shape[0] != n_u + n_c + n_0:
        raise ValueError(f"residual has length {r.shape[0]}, expected {n_u + n_c + n_0}")
    out = np.empty_like(r, dtype=float)
    out[:n_u] = P_V_fact.solve(r[:n_u])
    out[n_u : n_u + n_c] = P_Qc_fact.solve(r[n_u : n_u + n_c])
    out[n_u + n_c :] = P_Q0_fact.solve(r[n_u + n_c :])
    return out


@dataclass(frozen=True, eq=False)
class BlockPreconditioner:
    P_V: SpdFactorization
    P_Qc: SpdFactorization
    P_Q0: SpdFactorization

    @classmethod
    def from_blocks(cls, blocks: PreconditionerBlocks) -> "BlockPreconditioner":
        factors = {}
        for name in ("P_V", "P_Qc", "P_Q0"):
            try:
                factors[name] = spd_factorize(getattr(blocks, name), block=name)
            except NotPositiveDefinite as exc:
                raise ConfigurationError(
                    f"preconditioner block {name} is not positive definite "
                    f"(pivot {exc.pivot_index}); check gamma and that Γ_p is non-empty"
                ) from exc
        return cls(**factors)

    @property
    def size(self) -> int:
        return self.P_V.n + self.P_Qc.n + self.P_Q0.n

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return apply_block_preconditioner(self.P_V, self.P_Qc, self.P_Q0, r)
