"""Run configuration: nested dataclasses loaded from and echoed to YAML."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

import yaml

from .env import EnvConfig
from .policies import PriorSettings

MATCH_TOL = 1e-3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    n_transitions: int = 20_000
    seed: int = 0
    cruise_speed: float = 1.0
    behavior_noise: float = 0.5


@dataclass(frozen=True)
class FqeConfig:
    # desk-scale fixture: faster target tracking and a shorter horizon than the
    # library defaults (tau 5e-3, gamma 0.99) so 200 epochs converge
    epochs: int = 200
    gamma: float = 0.9
    polyak_tau: float = 0.05
    batch_size: int = 512
    ridge: float = 1e-6
    goal_sampler: str = "mixture"
    seed: int = 0


@dataclass(frozen=True)
class PriorConfig:
    settings: PriorSettings = field(default_factory=PriorSettings)
    noisy_sigma: float = 0.05
    seed: int = 0  # prior draw used by the main rollout package


@dataclass(frozen=True)
class BootstrapConfig:
    level: float = 0.95
    resamples: int = 10_000
    seed: int = 0


@dataclass(frozen=True)
class AuditConfig:
    n_states: int = 5000
    tolerance: float = 1e-6


@dataclass(frozen=True)
class DegradationConfig:
    variants: tuple = ("trained", "undertrained", "noisy", "random")
    seeds: tuple = (0, 1, 2)
    episodes_per_seed: int = 3
    alpha: float = 0.5
    additive_lambda: float = 0.5


@dataclass(frozen=True)
class CpiConfig:
    n_instances: int = 20
    n_states: int = 6
    n_actions: int = 3
    gammas: tuple = (0.9, 0.99)
    alphas: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    prior_temperature: float = 0.5
    mc_samples: int = 4096
    seed: int = 0


@dataclass(frozen=True)
class AlphaStudyConfig:
    alphas: tuple = (0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95)
    val_seeds: tuple = (0, 1, 2)
    test_seeds: tuple = (3, 4)
    episodes_per_seed: int = 5
    kappas: tuple = (1.0, 4.0, 16.0, 64.0)


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    env_id: str = "pointmass"
    goals: dict = field(default_factory=lambda: {"G1": (1.0, 0.1, 0.1), "G2": (0.5, 0.5, 0.5), "G3": (0.1, 1.0, 0.1)})
    alpha_grid: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    beta_grid: tuple = (0.111, 0.429, 1.0, 2.333, 9.0)
    additive_lambda: float = 0.5
    awr_betas: tuple = (0.5, 1.0, 3.0)
    awr_clip: float = 1.0
    seeds: tuple = (0, 1, 2, 3, 4)
    episodes_per_seed: int = 5
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    fqe: FqeConfig = field(default_factory=FqeConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    degradation: DegradationConfig = field(default_factory=DegradationConfig)
    cpi: CpiConfig = field(default_factory=CpiConfig)
    alpha_study: AlphaStudyConfig = field(default_factory=AlphaStudyConfig)
    risk_percentiles: tuple = (10.0, 5.0)

    def __post_init__(self):
        validate(self)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def with_seeds(self, seeds) -> "RunConfig":
        return replace(self, seeds=tuple(int(s) for s in seeds))


def validate(cfg: RunConfig):
    if len(cfg.alpha_grid) != len(cfg.beta_grid):
        raise ConfigError("alpha_grid and beta_grid must have the same length")
    for a, b in zip(cfg.alpha_grid, cfg.beta_grid):
        if not 0 < a < 1:
            raise ConfigError(f"alpha {a} outside (0, 1)")
        if abs(b - a / (1 - a)) > MATCH_TOL:
            raise ConfigError(f"beta {b} does not match alpha {a} (expected {a / (1 - a):.6f})")
    if not cfg.goals:
        raise ConfigError("at least one goal is required")
    for name, g in cfg.goals.items():
        if len(g) != 3:
            raise ConfigError(f"goal {name} must have three weights")
    if not cfg.seeds or len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("seeds must be a nonempty list without repeats")
    if cfg.episodes_per_seed < 1:
        raise ConfigError("episodes_per_seed must be >= 1")
    if not 0 <= cfg.additive_lambda <= 1:
        raise ConfigError("additive_lambda must lie in [0, 1]")
    if any(b <= 0 for b in cfg.awr_betas) or cfg.awr_clip <= 0:
        raise ConfigError("AWR betas and clip must be positive")
    if not 0 < cfg.bootstrap.level < 1 or cfg.bootstrap.resamples < 100:
        raise ConfigError("bootstrap level must lie in (0, 1) with >= 100 resamples")
    if cfg.prior.noisy_sigma <= 0:
        raise ConfigError("noisy_sigma must be positive")
    if set(cfg.alpha_study.val_seeds) & set(cfg.alpha_study.test_seeds):
        raise ConfigError("validation and test seeds must be disjoint")
    if any(k <= 0 for k in cfg.alpha_study.kappas) or list(cfg.alpha_study.kappas) != sorted(cfg.alpha_study.kappas):
        raise ConfigError("kappas must be positive and increasing")
    bad = set(cfg.degradation.variants) - {"trained", "undertrained", "noisy", "random"}
    if bad:
        raise ConfigError(f"unknown prior variants {sorted(bad)}")


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown keys in {path or 'config'}: {sorted(unknown)}")
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        current = getattr(defaults, name)
        where = f"{path}.{name}" if path else name
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, where)
        elif isinstance(current, tuple):
            kwargs[name] = tuple(value)
        elif name == "goals":
            kwargs[name] = {str(k): tuple(float(w) for w in v) for k, v in value.items()}
        else:
            kwargs[name] = value
    try:
        return replace(defaults, **kwargs)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{path or 'config'}: {e}") from e


def config_from_dict(data: dict | None) -> RunConfig:
    return _build(RunConfig, data or {}, "")


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
