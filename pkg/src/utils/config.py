"""
Run configuration: command defaults, TOML files and command-line overrides.

Sources in increasing precedence: command defaults, the TOML file given with
``--config`` (flat keys named like the long flags), command-line flags.
"""
from __future__ import annotations

import itertools
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional

from src.discretization.params import ModelParams
from src.utils.exceptions import ConfigurationError

ROOT = Path(__file__).resolve().parents[2]
RESULTS_ENV = "BIOT_RESULTS_DIR"
DEFAULT_SEED = 20260202

COMMANDS = ("converge", "precond", "check", "solve")
SWEEP_KEYS = ("beta", "nu", "dt", "gamma", "C1")
LIST_KEYS = ("N",) + SWEEP_KEYS
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")

COMMAND_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "converge": {"N": [8, 16, 32, 64], "beta": [1.0, 2.0], "nu": [0.3, 0.499], "dt": []},
    "precond": {
        "N": [8, 16, 32, 64],
        "beta": [0.0, 1.0, 2.0],
        "nu": [0.3, 0.499],
        "dt": [1e-1, 1e-2, 1e-3],
    },
    "check": {"N": [4], "beta": [2.0], "nu": [0.3], "dt": [1e-2]},
    "solve": {"N": [8], "beta": [1.0], "nu": [0.3], "dt": [0.125]},
}


def results_dir() -> Path:
    """Default output directory; ``BIOT_RESULTS_DIR`` overrides ``results/tables``."""
    env = os.environ.get(RESULTS_ENV)
    return Path(env) if env else ROOT / "results" / "tables"


def parse_list(value: Any, cast: Callable[[Any], Any], name: str) -> list:
    """Comma-separated text, a TOML array or a scalar, converted element-wise."""
    if isinstance(value, str):
        items = [item.strip() for item in value.split(",") if item.strip()]
    elif isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [value]
    try:
        return [cast(item) for item in items]
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid value for {name}: {value!r}") from exc


def _mesh_size(value: Any) -> int:
    as_float = float(value)
    if not as_float.is_integer():
        raise ValueError(value)
    return int(as_float)


def parse_kappa(value: Any) -> Any:
    """A scalar, or four comma-separated entries k11,k12,k21,k22 of a 2x2 tensor."""
    entries = parse_list(value, float, "kappa")
    if len(entries) == 1:
        return entries[0]
    if len(entries) == 4:
        return ((entries[0], entries[1]), (entries[2], entries[3]))
    raise ConfigurationError(f"kappa needs 1 or 4 entries, got {len(entries)}")


@dataclass
class RunConfig:
    command: str = "solve"
    N: List[int] = field(default_factory=list)
    beta: List[float] = field(default_factory=list)
    nu: List[float] = field(default_factory=list)
    dt: List[float] = field(default_factory=list)
    gamma: List[float] = field(default_factory=lambda: [10.0])
    C1: List[float] = field(default_factory=lambda: [1.0])
    E: float = 1.0
    alpha: float = 1.0
    s0: float = 0.0
    kappa: Any = 1.0
    T: float = 1.0
    rtol: float = 1e-8
    maxit: int = 1000
    steps: int = 10
    initial_pressure: str = "elliptic"
    gamma_d: str = "left"
    gamma_p: str = "boundary"
    out: Optional[Path] = None
    seed: int = DEFAULT_SEED
    log_level: str = "INFO"

    def params(self, **sweep: Any) -> ModelParams:
        """ModelParams for one point of the sweep (first list entries by default)."""
        values = {key: getattr(self, key)[0] for key in SWEEP_KEYS if getattr(self, key)}
        values.update(sweep)
        return ModelParams(
            E=self.E, alpha=self.alpha, s0=self.s0, kappa=self.kappa, T=self.T, **values
        )

    def sweep(self, keys: tuple = SWEEP_KEYS) -> Iterator[Dict[str, Any]]:
        """Cartesian product of the listed sweep keys that have values."""
        active = [key for key in keys if getattr(self, key)]
        for combo in itertools.product(*(getattr(self, key) for key in active)):
            yield dict(zip(active, combo))

    def output_dir(self) -> Path:
        if self.out is None:
            return results_dir()
        return self.out if self.out.suffix == "" else self.out.parent

    def validate(self) -> "RunConfig":
        """Check every parameter combination before any work starts."""
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        if not self.N:
            raise ConfigurationError("at least one mesh size N is required")
        bad = [n for n in self.N if n < 1]
        if bad:
            raise ConfigurationError(f"mesh size N must be >= 1, got {bad}")
        if not 0.0 < self.rtol < 1.0:
            raise ConfigurationError(f"rtol must lie in (0, 1), got {self.rtol}")
        if self.maxit < 1:
            raise ConfigurationError(f"maxit must be >= 1, got {self.maxit}")
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")
        if self.log_level not in LOG_LEVELS:
            raise ConfigurationError(f"log level must be one of {LOG_LEVELS}, got {self.log_level!r}")
        for point in self.sweep():
            self.params(**point)
        return self


_CASTS: Dict[str, Callable[[Any], Any]] = {
    "N": _mesh_size,
    "E": float,
    "alpha": float,
    "s0": float,
    "T": float,
    "rtol": float,
    "maxit": _mesh_size,
    "steps": _mesh_size,
    "seed": _mesh_size,
    "initial_pressure": str,
    "gamma_d": str,
    "gamma_p": str,
    "log_level": lambda v: str(v).upper(),
    "out": Path,
}


def _coerce(key: str, value: Any) -> Any:
    if key in LIST_KEYS:
        return parse_list(value, _CASTS.get(key, float), key)
    if key == "kappa":
        return parse_kappa(value)
    try:
        return _CASTS[key](value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid value for {key}: {value!r}") from exc


def read_toml(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with path.open("rb") as handle:
            data = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc
    return {key.replace("-", "_"): value for key, value in data.items()}


def load_config(
    command: str,
    overrides: Optional[Dict[str, Any]] = None,
    config_path: Optional[Path] = None,
) -> RunConfig:
    """Merge command defaults, an optional TOML file and explicit overrides."""
    known = {f.name for f in fields(RunConfig)} - {"command"}
    config = RunConfig(command=command, **COMMAND_DEFAULTS.get(command, {}))
    layers = []
    if config_path is not None:
        layers.append(read_toml(config_path))
    layers.append({k: v for k, v in (overrides or {}).items() if v is not None})
    for layer in layers:
        unknown = sorted(set(layer) - known)
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        config = replace(config, **{key: _coerce(key, value) for key, value in layer.items()})
    return config.validate()
