"""Run configuration: TOML in, validated dataclasses out.

Grammar (TOML, all tables optional except where the experiment needs them)::

    experiment = "pair"            # hartree | pair | fock-verify | error-sweep
    dim = 1
    n = 64
    box_length = 64.0
    N = 64
    beta = 0.2
    dt = 0.01
    T = 10.0
    sample_every = 10
    seed = 0
    output_dir = "out"

    [potential]
    profile = "gaussian"           # box | gaussian | triangle
    width = 5.0
    height = 0.1

    [phi0]
    kind = "gaussian"              # gaussian | file
    center = [0.0]
    momentum = [0.0]
    width = 2.0
    norm = 1.0
    # path = "phi0.field"          # for kind = "file"

    [tolerances]
    form_residual = 1e-6

    [sweep]                        # error-sweep only
    N_list = [16, 32, 64, 128]
    betas = [0.0, 0.2]

    [fock]                         # fock-verify only
    modes = 3
    n_max = 6
    trials = 20
    theta = 0.2
"""

from __future__ import annotations

import difflib
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "parse_config", "config_from_dict", "EXPERIMENTS"]

EXPERIMENTS = ("hartree", "pair", "fock-verify", "error-sweep")
PROFILES = ("box", "gaussian", "triangle")


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


@dataclass
class PotentialConfig:
    profile: str = "gaussian"
    width: float = 5.0
    height: float = 0.1


@dataclass
class Phi0Config:
    kind: str = "gaussian"
    center: list = field(default_factory=lambda: [0.0])
    momentum: list = field(default_factory=lambda: [0.0])
    width: float = 2.0
    norm: float = 1.0
    path: str | None = None


@dataclass
class Tolerances:
    mass_drift: float = 1e-10
    energy_drift: float = 1e-6
    momentum_drift: float = 1e-8
    form_residual: float = 1e-6
    identity_residual: float = 1e-6
    trace_residual: float = 1e-8
    lie_residual: float = 1e-9
    bogoliubov_residual: float = 1e-8
    exponent_window: float = 0.1


@dataclass
class SweepConfig:
    N_list: list = field(default_factory=lambda: [16, 32, 64, 128])
    betas: list = field(default_factory=lambda: [0.0, 0.2])
    workers: int = 1


@dataclass
class FockConfig:
    modes: int = 3
    n_max: int = 6
    trials: int = 20
    theta: float = 0.2
    bogoliubov_n_max: int = 20


@dataclass
class RunConfig:
    experiment: str = "hartree"
    dim: int = 1
    n: int = 64
    box_length: float = 64.0
    N: int = 64
    beta: float = 0.2
    dt: float = 0.01
    T: float = 1.0
    sample_every: int = 10
    seed: int = 0
    output_dir: str = "out"
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    phi0: Phi0Config = field(default_factory=Phi0Config)
    tolerances: Tolerances = field(default_factory=Tolerances)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    fock: FockConfig = field(default_factory=FockConfig)

    def to_dict(self) -> dict:
        return asdict(self)


_TABLES = {"potential": PotentialConfig, "phi0": Phi0Config, "tolerances": Tolerances,
           "sweep": SweepConfig, "fock": FockConfig}


def _unknown(key: str, allowed, where: str) -> ConfigError:
    hint = difflib.get_close_matches(key, list(allowed), n=1)
    msg = f"unknown key {key!r} in {where}"
    if hint:
        msg += f" (did you mean {hint[0]!r}?)"
    return ConfigError(msg)


def _coerce(value, default, name: str):
    """Type-check value against the type of the default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, str) or default is None:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name} must be a list, got {value!r}")
        return list(value)
    return value


def _fill(cls, data: dict, where: str):
    obj = cls()
    names = {f.name for f in fields(cls)}
    for key, value in data.items():
        if key not in names:
            raise _unknown(key, names, where)
        setattr(obj, key, _coerce(value, getattr(obj, key), f"{where}.{key}"))
    return obj


def config_from_dict(data: dict, experiment: str | None = None) -> RunConfig:
    data = dict(data)
    cfg = RunConfig()
    names = {f.name for f in fields(RunConfig)}
    for key, value in data.items():
        if key not in names:
            raise _unknown(key, names, "config")
        if key in _TABLES:
            if not isinstance(value, dict):
                raise ConfigError(f"{key} must be a table")
            setattr(cfg, key, _fill(_TABLES[key], value, key))
        else:
            setattr(cfg, key, _coerce(value, getattr(cfg, key), key))
    if experiment is not None:
        if "experiment" in data and data["experiment"] != experiment:
            raise ConfigError(f"config is for {data['experiment']!r}, not {experiment!r}")
        cfg.experiment = experiment
    validate(cfg)
    return cfg


def parse_config(path, experiment: str | None = None) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data, experiment)


def _positive(name, value):
    if not (value > 0 and math.isfinite(value)):
        raise ConfigError(f"{name} must be positive and finite, got {value}")


def validate(cfg: RunConfig) -> None:
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    if cfg.dim not in (1, 2, 3):
        raise ConfigError("dim must be 1, 2 or 3")
    if cfg.n < 8 or cfg.n & (cfg.n - 1):
        raise ConfigError("n must be a power of two, at least 8")
    _positive("box_length", cfg.box_length)
    if cfg.N < 1:
        raise ConfigError("N must be a positive integer")
    if not 0.0 <= cfg.beta <= 1.0:
        raise ConfigError(f"beta must lie in [0, 1], got {cfg.beta}")
    _positive("dt", cfg.dt)
    if cfg.T < 0 or not math.isfinite(cfg.T):
        raise ConfigError("T must be finite and non-negative")
    steps = cfg.T / cfg.dt
    if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
        raise ConfigError("T must be an integer multiple of dt")
    if cfg.sample_every < 1:
        raise ConfigError("sample_every must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("seed must be non-negative")
    if not cfg.output_dir:
        raise ConfigError("output_dir must be non-empty")
    pot = cfg.potential
    if pot.profile not in PROFILES:
        raise ConfigError(f"potential.profile must be one of {PROFILES}, got {pot.profile!r}")
    _positive("potential.width", pot.width)
    if pot.height < 0:
        raise ConfigError("potential.height must be non-negative")
    phi = cfg.phi0
    if phi.kind not in ("gaussian", "file"):
        raise ConfigError("phi0.kind must be 'gaussian' or 'file'")
    if phi.kind == "file":
        if not phi.path:
            raise ConfigError("phi0.path is required for phi0.kind = 'file'")
    else:
        for name in ("center", "momentum"):
            vec = getattr(phi, name)
            if len(vec) not in (1, cfg.dim) or not all(isinstance(v, (int, float)) for v in vec):
                raise ConfigError(f"phi0.{name} must hold 1 or dim numbers")
        _positive("phi0.width", phi.width)
        _positive("phi0.norm", phi.norm)
    for f in fields(Tolerances):
        _positive(f"tolerances.{f.name}", getattr(cfg.tolerances, f.name))
    sw = cfg.sweep
    if cfg.experiment == "error-sweep":
        if cfg.dim != 1:
            raise ConfigError("error-sweep is limited to dim = 1")
        if len(set(sw.N_list)) < 3 or any(not isinstance(N, int) or N < 1 for N in sw.N_list):
            raise ConfigError("sweep.N_list needs at least 3 distinct positive integers")
        if not sw.betas or any(not 0.0 <= b <= 1.0 for b in sw.betas):
            raise ConfigError("sweep.betas must be a non-empty list in [0, 1]")
    if sw.workers < 1:
        raise ConfigError("sweep.workers must be >= 1")
    fk = cfg.fock
    if fk.modes < 1 or fk.n_max < 2 or fk.trials < 1 or fk.bogoliubov_n_max < 4:
        raise ConfigError("fock: need modes >= 1, n_max >= 2, trials >= 1, bogoliubov_n_max >= 4")


def resolve_output(cfg: RunConfig, override: str | None = None) -> Path:
    return Path(override if override is not None else cfg.output_dir)
