"""
Run configuration: a YAML document with grid, physics, integrator and
experiment blocks plus a seed. Floats are written with ``repr`` so a
config survives a dump/load round trip exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

SUBCOMMANDS = ("simulate", "spectrum", "bifurcate", "decompose", "shoot", "quartic", "track")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class GridConfig:
    nx: int = 256  # points along x
    ny: int = 8  # points along y
    X: float = 30.0  # half-width of the x box
    L: float = 1.0  # y has period 2 pi L


@dataclass(frozen=True)
class PhysicsConfig:
    c_star: float = 1.0  # reference speed
    kappa: float = 0.1  # E_kappa weight
    delta: float = 0.05  # mobile-distance / cutoff scale
    eps_tube: float = 0.05  # H^1 tube radius


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "ifrk4"
    dt: float = 0.01  # time step
    t_end: float = 1.0  # horizon
    snapshot_every: int = 100  # steps between stored snapshots


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    experiment: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=int(seed))


def _block(cls, data, name):
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(name, "must be a mapping")
    known = {f for f in cls.__dataclass_fields__}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"{name}.{sorted(extra)[0]}", "unknown field")
    out = {}
    for key, default in asdict(cls()).items():
        val = data.get(key, default)
        kind = type(default)
        try:
            if kind is int:
                if isinstance(val, bool) or float(val) != int(val):
                    raise ValueError
                val = int(val)
            elif kind is float:
                if isinstance(val, bool):
                    raise ValueError
                val = float(val)
            elif kind is str:
                val = str(val)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}.{key}", f"expected {kind.__name__}, got {val!r}") from None
        out[key] = val
    return cls(**out)


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be a mapping")
    extra = set(data) - {"grid", "physics", "integrator", "experiment", "seed"}
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown block")
    exp = data.get("experiment") or {}
    if not isinstance(exp, dict):
        raise ConfigError("experiment", "must be a mapping")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed", f"expected int, got {seed!r}")
    cfg = RunConfig(
        _block(GridConfig, data.get("grid"), "grid"),
        _block(PhysicsConfig, data.get("physics"), "physics"),
        _block(IntegratorConfig, data.get("integrator"), "integrator"),
        dict(exp),
        seed,
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig, subcommand: str | None = None) -> RunConfig:
    """Check every numeric field against the preconditions of the modules."""
    g, p, i = cfg.grid, cfg.physics, cfg.integrator
    for name in ("nx", "ny"):
        n = getattr(g, name)
        if n < 8 or n % 2:
            raise ConfigError(f"grid.{name}", f"must be an even integer >= 8, got {n}")
    for name in ("X", "L"):
        if not (getattr(g, name) > 0 and np.isfinite(getattr(g, name))):
            raise ConfigError(f"grid.{name}", "must be positive")
    for name in ("c_star", "kappa", "delta", "eps_tube"):
        if not (getattr(p, name) > 0 and np.isfinite(getattr(p, name))):
            raise ConfigError(f"physics.{name}", f"must be positive, got {getattr(p, name)}")
    if i.scheme not in ("ifrk4", "etdrk4"):
        raise ConfigError("integrator.scheme", f"must be ifrk4 or etdrk4, got {i.scheme!r}")
    if not i.dt > 0:
        raise ConfigError("integrator.dt", "must be positive")
    if not i.t_end >= 0:
        raise ConfigError("integrator.t_end", "must be non-negative")
    if i.snapshot_every < 1:
        raise ConfigError("integrator.snapshot_every", "must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("seed", "must be non-negative")
    if subcommand is not None and subcommand not in SUBCOMMANDS:
        raise ConfigError("subcommand", f"must be one of {SUBCOMMANDS}")
    return cfg


def dumps(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def loads(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML ({exc})") from None
    return from_dict(data or {})


def load(path: str | Path) -> RunConfig:
    return loads(Path(path).read_text())


def save(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))
