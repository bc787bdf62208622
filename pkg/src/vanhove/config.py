"""Experiment configuration: nested dataclasses read from TOML with strict key checking."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

REFERENCES = ("correct", "wrong-nonstationary", "wrong-mismatched-temperature")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class BathSpec:
    builder: str = "quasicontinuum"
    n_modes: int = 256
    band: list = field(default_factory=lambda: [0.5, 1.5])
    shape: str = "flat"
    beta: float = math.inf
    strength: float = 0.1


@dataclass
class ModelSpec:
    system: str = "qubit"
    splitting: float = 1.0
    coupling: str = "sigma_x-field"
    bath: BathSpec = field(default_factory=BathSpec)


@dataclass
class FactorSpec:
    """exp(-i angle A kron phi(profile)) with A a Pauli matrix and a smooth mode profile."""

    system_op: str = "x"
    angle: float = 0.3
    profile: str = "sine"


@dataclass
class InitialStateSpec:
    system: str = "excited"
    factors: list = field(default_factory=lambda: [FactorSpec()])
    factorized: bool = False


@dataclass
class KernelSpec:
    method: str = "time-integral"
    T_int: float = 0.25  # in units of the recurrence time
    eta: float = 3.0  # in units of the level spacing
    step: float = 0.1  # quadrature step times the generator norm estimate


@dataclass
class ConvergenceSpec:
    floor_factor: int = 2


@dataclass
class CorrelationSpec:
    n_modes: int = 96
    taus: list = field(default_factory=lambda: [1.0])


@dataclass
class SecularSpec:
    n_modes: int = 96
    tau: float = 1.0
    wrong_beta: float = 6.0
    packet_width: float = 0.1


@dataclass
class FactorizationSpec:
    battery_size: int = 3
    harmonics: int = 3


@dataclass
class FreeSpec:
    n_modes: int = 64
    n_times: int = 41
    plateau_fraction: float = 0.05


@dataclass
class AppendixSpec:
    beta: float = 1.0
    beta2: float = 2.0
    overlap_modes: list = field(default_factory=lambda: [2, 4, 8, 16, 32, 64])
    projection_modes: list = field(default_factory=lambda: [32, 64, 128])
    cesaro_horizons: list = field(default_factory=lambda: [50.0, 100.0, 200.0])


@dataclass
class OutputSpec:
    dir: str = "results"
    format: str = "csv"


@dataclass
class ExperimentConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    lambdas: list = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    tau_grid: list = field(default_factory=lambda: [round(0.1 * k, 10) for k in range(31)])
    rho0: InitialStateSpec = field(default_factory=InitialStateSpec)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    reference: str = "wrong-mismatched-temperature"
    convergence: ConvergenceSpec = field(default_factory=ConvergenceSpec)
    correlation: CorrelationSpec = field(default_factory=CorrelationSpec)
    secular: SecularSpec = field(default_factory=SecularSpec)
    factorization: FactorizationSpec = field(default_factory=FactorizationSpec)
    free: FreeSpec = field(default_factory=FreeSpec)
    appendix: AppendixSpec = field(default_factory=AppendixSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    seed: int = 0

    def validate(self) -> "ExperimentConfig":
        lams = self.lambdas
        if not lams or any(not (lam > 0 and math.isfinite(lam)) for lam in lams):
            raise ConfigError("lambdas must be positive and finite")
        if any(b >= a for a, b in zip(lams, lams[1:])):
            raise ConfigError("lambdas must be strictly decreasing")
        if not self.tau_grid or any(t < 0 or not math.isfinite(t) for t in self.tau_grid):
            raise ConfigError("tau_grid must hold finite non-negative values")
        if list(self.tau_grid) != sorted(self.tau_grid):
            raise ConfigError("tau_grid must be sorted")
        if self.reference not in REFERENCES:
            raise ConfigError(f"reference must be one of {REFERENCES}")
        if self.kernel.method not in ("time-integral", "resolvent"):
            raise ConfigError("kernel.method must be 'time-integral' or 'resolvent'")
        if not 0 < self.kernel.step <= 0.1:
            raise ConfigError("kernel.step must lie in (0, 0.1]")
        if self.model.system != "qubit" or self.model.coupling != "sigma_x-field":
            raise ConfigError("only the qubit system with sigma_x-field coupling is available")
        if self.model.bath.builder != "quasicontinuum":
            raise ConfigError("only the quasicontinuum bath builder is available")
        if self.rho0.system not in ("excited", "ground", "plus"):
            raise ConfigError("rho0.system must be 'excited', 'ground' or 'plus'")
        for f in self.rho0.factors:
            if f.system_op not in ("x", "y", "z") or f.profile not in ("sine", "flat"):
                raise ConfigError("factor system_op must be x|y|z and profile sine|flat")
        if self.output.format not in ("csv", "json"):
            raise ConfigError("output.format must be csv or json")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        return self

    def canonical(self) -> dict:
        """Plain dict of everything that determines the numbers (output location excluded)."""
        d = asdict(self)
        d.pop("output")
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=_json_default)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _json_default(x):
    if isinstance(x, float):
        return repr(x)
    raise TypeError(type(x))


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) in {path or 'config'}: {', '.join(unknown)}")
    default = cls()
    kwargs = {}
    for name, value in data.items():
        where = f"{path}.{name}" if path else name
        current = getattr(default, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, where)
        elif name == "factors":
            if not isinstance(value, list):
                raise ConfigError(f"{where} must be an array of tables")
            kwargs[name] = [_build(FactorSpec, v, f"{where}[{i}]") for i, v in enumerate(value)]
        else:
            kwargs[name] = _coerce(current, value, where)
    return cls(**kwargs)


def _coerce(default, value, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where} must be an array")
        if default and isinstance(default[0], (int, float)) and not isinstance(default[0], bool):
            allowed = int if isinstance(default[0], int) else (int, float)
            if any(isinstance(v, bool) or not isinstance(v, allowed) for v in value):
                raise ConfigError(f"{where} must hold {'integers' if allowed is int else 'numbers'}")
            return [v if allowed is int else float(v) for v in value]
        return list(value)
    raise ConfigError(f"cannot interpret {where}")


def config_from_dict(data: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, data, "").validate()


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read a TOML file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig().validate()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return config_from_dict(data)
