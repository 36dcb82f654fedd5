"""Exception hierarchy shared by the discretization, solvers and CLI."""
from __future__ import annotations

from typing import Any, Optional


class BiotError(Exception):
    """Base class for all package errors."""


class ConfigurationError(BiotError, ValueError):
    """Invalid parameters, mesh sizes, boundary descriptors or config files."""


class ElementConstructionError(BiotError):
    """The local MTW basis could not be built (degenerate geometry)."""


class SolverError(BiotError):
    """Base class for linear solver failures."""


class NotPositiveDefinite(SolverError):
    """A factorization met a non-positive pivot."""

    def __init__(self, pivot_index: int, pivot: float, block: Optional[str] = None) -> None:
        self.pivot_index = int(pivot_index)
        self.pivot = float(pivot)
        self.block = block
        where = f" in block {block!r}" if block else ""
        super().__init__(f"non-positive pivot {pivot:.3e} at index {pivot_index}{where}")


class NotConverged(SolverError):
    """MinRes ran out of iterations; carries the best iterate and its report."""

    def __init__(self, x: Any, report: Any) -> None:
        self.x = x
        self.report = report
        super().__init__(
            f"MinRes did not converge in {report.iterations} iterations "
            f"(residual {report.residual:.3e})"
        )


class Breakdown(SolverError):
    """The Lanczos recurrence broke down before convergence."""
