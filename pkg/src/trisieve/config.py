"""Experiment configuration: JSON files with a strict schema.

Every section is a frozen dataclass. Loading rejects unknown keys and
wrongly typed values; the resolved configuration is echoed into each report.
Pilot-calibrated thresholds live here next to the knobs they gate.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .rng import DEFAULT_SEED


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExponentsConfig:
    m_exp: float = 0.188722
    box: tuple = ((0.05, 0.95), (0.05, 0.95))
    tolerance: float = 1e-10
    grid_step: float = 1e-3


@dataclass(frozen=True)
class GeometryConfig:
    dims: tuple = (16, 20, 24)
    samples: int = 1_000_000
    cap_cosines: tuple = (0.347606, 0.427124, 0.5)
    # (cos_alpha, cos_beta, cos_theta) wedge specs; theta' rows use 1/sqrt(3)
    wedges: tuple = (
        (0.347606, 0.347606, 1.0 / 3.0),
        (0.427124, 0.427124, 0.5773502691896258),
        (1.0 / 3.0, 0.347606, 0.347606),
    )
    include_zero_epsilon: bool = True


@dataclass(frozen=True)
class RpcConfig:
    instances: int = 100
    max_dim: int = 16
    blocks: tuple = (1, 2, 4)
    max_code_size: int = 4096
    collision_d: int = 20
    collision_blocks: int = 4
    collision_draws: int = 400
    collision_cos_alpha: float = 0.347606
    collision_cos_theta: float = 1.0 / 3.0
    collision_slack: float = 0.05


@dataclass(frozen=True)
class SieveEmulationConfig:
    d: int = 12
    m: int = 128
    draws: int = 1_000_000
    chi_square_alpha: float = 1e-4
    min_expected: float = 5.0
    ledger_trials: int = 20
    goodness_d: int = 16
    goodness_m: int = 512
    goodness_draws: int = 100
    # the pilot measured about 0.06 at this size; 0.2 stays as the gate
    min_good_rate: float = 0.2
    z_policy: str = "chernoff"
    tsol_d: int = 14
    tsol_m: int = 400
    tsol_seeds: int = 50
    tsol_max_rel_std: float = 0.5


@dataclass(frozen=True)
class SvpConfig:
    basis: str = ""  # empty: bundled d = 16 fixture
    ratio: float = 1.05
    instances: int = 20
    d: int = 20
    bits: int = 10
    min_success: float = 0.9
    list_size: int = 0
    list_factor: float = 2.0
    min_list: int = 400
    codes_per_iteration: int = 4
    epsilon: float = 0.0
    rho: float = 0.9
    mu: float = 0.0
    max_iterations: int = 200
    min_keep: int = 8
    lll_delta: float = 0.99
    max_dim: int = 40
    time_budget: float = 120.0


@dataclass(frozen=True)
class AaConfig:
    good_mass: float = 0.25
    delta: float = 1e-3
    eta: float = 2.0
    masses: tuple = (1.0, 0.5, 0.25, 1.0 / 64.0)
    extra_rounds: int = 64


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = DEFAULT_SEED
    workers: int = 1
    slack: float = 0.04
    output: str = ""
    exponents: ExponentsConfig = field(default_factory=ExponentsConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    rpc: RpcConfig = field(default_factory=RpcConfig)
    sieve: SieveEmulationConfig = field(default_factory=SieveEmulationConfig)
    svp: SvpConfig = field(default_factory=SvpConfig)
    aa: AaConfig = field(default_factory=AaConfig)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def replace(self, section: str | None = None, **changes) -> "ExperimentConfig":
        if section is None:
            return dataclasses.replace(self, **changes)
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _coerce(value, annotation, default, where):
    if dataclasses.is_dataclass(default):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return _build(type(default), value, where)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return _tuple(value)
    raise ConfigError(f"{where}: unsupported field type")


def _tuple(v):
    return tuple(_tuple(x) if isinstance(x, list) else x for x in v)


def _build(cls, data: dict, where: str = "config"):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    defaults = cls()
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _coerce(value, hints.get(name), getattr(defaults, name), f"{where}.{name}")
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    cfg = _build(ExperimentConfig, data)
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("config.seed: must be a 64-bit unsigned integer")
    if cfg.workers < 1:
        raise ConfigError("config.workers: must be at least 1")
    if cfg.slack <= 0:
        raise ConfigError("config.slack: must be positive")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    return config_from_dict(data)
