"""Sparse symmetric helpers and SPD factorization of the preconditioner blocks."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import splu

from src.utils.exceptions import NotPositiveDefinite

logger = logging.getLogger(__name__)


def symmetry_defect(A: sp.spmatrix) -> float:
    """max |A - A^T| relative to max |A| (zero for an exactly symmetric matrix)."""
    A = sp.csr_matrix(A)
    scale = abs(A).max() if A.nnz else 0.0
    diff = A - A.T
    defect = abs(diff).max() if diff.nnz else 0.0
    return float(defect / scale) if scale > 0 else float(defect)


@dataclass(frozen=True, eq=False)
class SpdFactorization:
    """LU factors of a symmetrically permuted SPD matrix with diagonal pivoting."""

    perm: np.ndarray
    lu: object
    n: int

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has length {b.shape[0]}, expected {self.n}")
        x = np.empty_like(b)
        x[self.perm] = self.lu.solve(b[self.perm])
        return x

    def __call__(self, b: np.ndarray) -> np.ndarray:
        return self.solve(b)


def spd_factorize(A: sp.spmatrix, block: str | None = None) -> SpdFactorization:
    """
    Factorize a symmetric positive definite sparse matrix.

    The matrix is reordered with reverse Cuthill-McKee and factorized by
    SuperLU with diagonal pivoting only, so the U diagonal holds the LDL^T
    pivots and is checked for positivity.

    Raises
    ------
    NotPositiveDefinite
        On a non-positive pivot, naming its index in the original numbering.
    """
    A = sp.csc_matrix(A)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix must be square, got {A.shape}")
    if n == 0:
        return SpdFactorization(perm=np.arange(0), lu=None, n=0)
    perm = np.asarray(reverse_cuthill_mckee(sp.csr_matrix(A), symmetric_mode=True), dtype=np.int64)
    Ap = A[perm][:, perm].tocsc()
    diag = Ap.diagonal()
    bad = np.flatnonzero(diag <= 0.0)
    if bad.size:
        k = int(bad[0])
        raise NotPositiveDefinite(int(perm[k]), float(diag[k]), block)
    try:
        lu = splu(
            Ap,
            permc_spec="NATURAL",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise NotPositiveDefinite(-1, 0.0, block) from exc
    if not np.array_equal(lu.perm_r, np.arange(n)):
        k = int(np.flatnonzero(lu.perm_r != np.arange(n))[0])
        raise NotPositiveDefinite(int(perm[k]), 0.0, block)
    pivots = lu.U.diagonal()
    bad = np.flatnonzero(~(pivots > 0.0))
    if bad.size:
        k = int(bad[0])
        raise NotPositiveDefinite(int(perm[k]), float(pivots[k]), block)
    logger.debug("factorized %s: n=%d, nnz(L)=%d, nnz(U)=%d", block or "matrix", n, lu.L.nnz, lu.U.nnz)
    return SpdFactorization(perm=perm, lu=lu, n=n)


def write_matrix_coo(A: sp.spmatrix, path: Path) -> None:
    """Write (row, col, value) lines, 0-based, for cross-checking with external tools."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    with path.open("w", encoding="utf-8") as handle:
        handle.write(f"% {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for r, c, v in zip(C.row[order], C.col[order], C.data[order]):
            handle.write(f"{r} {c} {v:.17e}\n")
    logger.info("wrote %d entries to %s", C.nnz, path)
