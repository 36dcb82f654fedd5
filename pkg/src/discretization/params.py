"""Physical and discretization parameters of the Biot model."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Any, Callable, Union

import numpy as np

from src.utils.exceptions import ConfigurationError

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _finite(name: str, value: Any) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name} must be a real number, got {value!r}") from exc
    if not math.isfinite(value):
        raise ConfigurationError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """
    Parameters of the two-field Biot system and its discretization.

    Notes
    -----
    - mu and lam are derived from E and nu.
    - s0 is a non-negative scalar or a callable ``s0(x, y)``.
    - kappa is a positive scalar or a symmetric positive definite 2x2 matrix.
    """

    nu: float = 0.3
    E: float = 1.0
    alpha: float = 1.0
    s0: Union[float, ScalarField] = 0.0
    kappa: Union[float, tuple] = 1.0
    gamma: float = 10.0
    beta: float = 1.0
    C1: float = 1.0
    dt: float = 0.125
    T: float = 1.0

    def __post_init__(self) -> None:
        E = _finite("E", self.E)
        nu = _finite("nu", self.nu)
        if E <= 0.0:
            raise ConfigurationError(f"E must be positive, got {E}")
        # lambda > 0 needs nu > 0
        if not 0.0 < nu < 0.5:
            raise ConfigurationError(f"nu must satisfy 0 < nu < 1/2, got {nu}")
        _finite("alpha", self.alpha)
        if _finite("gamma", self.gamma) <= 0.0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if _finite("beta", self.beta) < 0.0:
            raise ConfigurationError(f"beta must be non-negative, got {self.beta}")
        if _finite("C1", self.C1) < 0.0:
            raise ConfigurationError(f"C1 must be non-negative, got {self.C1}")
        if _finite("dt", self.dt) <= 0.0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if _finite("T", self.T) <= 0.0:
            raise ConfigurationError(f"T must be positive, got {self.T}")

        if callable(self.s0):
            grid = np.linspace(0.0, 1.0, 7)
            xx, yy = np.meshgrid(grid, grid)
            sample = np.broadcast_to(np.asarray(self.s0(xx, yy), dtype=float), xx.shape)
            if np.any(sample < 0.0) or not np.all(np.isfinite(sample)):
                raise ConfigurationError("s0 must be finite and non-negative on the domain")
        elif _finite("s0", self.s0) < 0.0:
            raise ConfigurationError(f"s0 must be non-negative, got {self.s0}")

        K = np.asarray(self.kappa, dtype=float)
        if K.ndim == 0:
            if not math.isfinite(float(K)) or float(K) <= 0.0:
                raise ConfigurationError(f"scalar kappa must be positive, got {self.kappa}")
        else:
            if K.shape != (2, 2) or not np.all(np.isfinite(K)):
                raise ConfigurationError("kappa must be a scalar or a 2x2 matrix")
            if not np.allclose(K, K.T, rtol=0.0, atol=1e-14 * np.abs(K).max()):
                raise ConfigurationError("kappa matrix must be symmetric")
            if np.linalg.eigvalsh(K).min() <= 0.0:
                raise ConfigurationError("kappa matrix must be positive definite")
            object.__setattr__(self, "kappa", tuple(map(tuple, K.tolist())))

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def lam_inv(self) -> float:
        return 1.0 / self.lam

    @property
    def kappa_matrix(self) -> np.ndarray:
        K = np.asarray(self.kappa, dtype=float)
        return K * np.eye(2) if K.ndim == 0 else K

    @property
    def kappa_bounds(self) -> tuple[float, float]:
        eig = np.linalg.eigvalsh(self.kappa_matrix)
        return float(eig[0]), float(eig[-1])

    @property
    def s0_is_zero(self) -> bool:
        return not callable(self.s0) and float(self.s0) == 0.0

    def s0_at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if callable(self.s0):
            return np.broadcast_to(np.asarray(self.s0(x, y), dtype=float), np.shape(x))
        return np.full(np.shape(x), float(self.s0))

    def with_overrides(self, **overrides: Any) -> "ModelParams":
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigurationError(f"unknown model parameters: {', '.join(unknown)}")
        return replace(self, **overrides)
