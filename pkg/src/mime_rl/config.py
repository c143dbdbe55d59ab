"""Experiment configuration: dataclasses, per-environment presets, YAML I/O.

A config file only has to name the environment and the method; everything
else falls back to the environment's preset and then to the dataclass default.
Resolution order (later wins): dataclass defaults, env preset, file, env vars.

Environment variables of the form ``MIME_RL__policy__learning_rate=3e-4``
override single keys; values are parsed as YAML scalars.
"""

from __future__ import annotations

import copy
import dataclasses
import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .envs import ENV_NAMES
from .intrinsic import FEATURE_MODES, KINDS

ENV_PREFIX = "MIME_RL__"


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-4`` (no decimal point) as a float, as YAML 1.2 does."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$|^[-+]?\.[0-9_]+(?:[eE][-+]?[0-9]+)?$"
               r"|^[-+]?[0-9][0-9_]*\.[0-9_]*(?:[eE][-+]?[0-9]+)?$|^[-+]?\.(?:inf|Inf|INF)$|^\.(?:nan|NaN|NAN)$"),
    list("-+0123456789."),
)


def _load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)
MODES = ("first-reward", "budget")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field (``policy.gamma``)."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class EnvConfig:
    name: str = "plane"
    # forwarded to the environment constructor (half_width, goal_radius, layout, random_start, ...)
    params: dict = field(default_factory=dict)
    max_steps: int = 500


@dataclass
class MethodConfig:
    kind: str = "none"
    feature_mode: str = "raw"
    k: int = 1
    bin_width: float = 0.05
    normalize: bool = False
    hidden: int = 32
    bottleneck: int | None = None
    feat_dim: int = 16
    learning_rate: float = 1e-3
    epochs: int = 1
    minibatches: int = 4


@dataclass
class PolicyConfig:
    hidden: int = 32
    init_log_std: float = 0.0
    learning_rate: float = 1e-3
    num_envs: int = 10
    horizon: int = 500
    gamma: float = 0.99
    # set to enable the two-stream value function (intrinsic discount)
    gamma_int: float | None = None
    gae_lambda: float = 0.95
    eta: float = 0.5
    clip_eps: float = 0.2
    epochs: int = 4
    minibatches: int = 4
    entropy_coef: float = 0.0
    normalize_advantages: bool = True
    # when set, the policy step size adapts after every update to keep KL(old || new) near this value
    target_kl: float | None = None


@dataclass
class EmitConfig:
    heatmap: bool = True
    trajectory: bool = False
    checkpoints: bool = False


@dataclass
class MetricsConfig:
    heatmap_bin: float = 0.02
    boundary_radius: float = 0.5
    boundary_tolerance: float = 0.05


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    method: MethodConfig = field(default_factory=MethodConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    emit: EmitConfig = field(default_factory=EmitConfig)
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    budget: int = 500_000
    mode: str = "first-reward"
    out_dir: str = "runs"
    name: str = ""
    workers: int = 1

    @property
    def batch_size(self) -> int:
        return self.policy.num_envs * self.policy.horizon

    @property
    def run_name(self) -> str:
        return self.name or f"{self.env.name}-{self.method.kind}"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-path overrides, e.g. ``replace(**{"method.kind": "mime"})``."""
        d = self.to_dict()
        for path, value in changes.items():
            _set_path(d, path.split("."), value)
        return from_dict(d, presets=False)


# Values that differ from the dataclass defaults for a given environment.
PRESETS: dict[str, dict] = {
    "plane": {},
    "wormhole": {"mode": "budget"},
    "rooms": {
        "mode": "budget",
        "budget": 500_000,
        # several passes per batch so the model tracks the learnable part of the rooms quickly
        "method": {"normalize": True, "epochs": 4},
        "policy": {
            "num_envs": 8,
            "horizon": 128,
            "learning_rate": 1e-4,
            "gamma": 0.999,
            "gamma_int": 0.99,
            "entropy_coef": 0.01,
        },
        "metrics": {"heatmap_bin": 1.0},
    },
}


def _set_path(d: dict, keys: list[str], value: Any) -> None:
    for key in keys[:-1]:
        d = d.setdefault(key, {})
    d[keys[-1]] = value


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "params":
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, "unknown key")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        kwargs[name] = _build(sub, value, f"{path}.{name}" if path else name) if sub else value
    return cls(**kwargs)


_NESTED = {
    (ExperimentConfig, "env"): EnvConfig,
    (ExperimentConfig, "method"): MethodConfig,
    (ExperimentConfig, "policy"): PolicyConfig,
    (ExperimentConfig, "metrics"): MetricsConfig,
    (ExperimentConfig, "emit"): EmitConfig,
}


def from_dict(data: dict, presets: bool = True) -> ExperimentConfig:
    """Build and validate a config; ``presets`` fills unspecified keys from the env preset."""
    if not isinstance(data, dict):
        raise ConfigError("", "config root must be a mapping")
    if presets:
        env = data.get("env", {})
        name = env.get("name", EnvConfig.name) if isinstance(env, dict) else None
        if name in PRESETS:
            data = _merge(PRESETS[name], data)
    cfg = _build(ExperimentConfig, data, "")
    validate(cfg)
    return cfg


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate(cfg: ExperimentConfig) -> None:
    _check(cfg.env.name in ENV_NAMES, "env.name", f"must be one of {ENV_NAMES}")
    _check(isinstance(cfg.env.params, dict), "env.params", "must be a mapping")
    _check(_is_int(cfg.env.max_steps) and cfg.env.max_steps > 0, "env.max_steps", "must be a positive integer")
    m = cfg.method
    _check(m.kind in KINDS, "method.kind", f"must be one of {KINDS}")
    _check(m.feature_mode in FEATURE_MODES, "method.feature_mode", f"must be one of {FEATURE_MODES}")
    for name in ("k", "hidden", "feat_dim", "epochs", "minibatches"):
        v = getattr(m, name)
        _check(_is_int(v) and v > 0, f"method.{name}", "must be a positive integer")
    _check(m.bottleneck is None or (_is_int(m.bottleneck) and m.bottleneck > 0), "method.bottleneck",
           "must be null or a positive integer")
    for name in ("bin_width", "learning_rate"):
        v = getattr(m, name)
        _check(_is_num(v) and v > 0, f"method.{name}", "must be positive")
    _check(isinstance(m.normalize, bool), "method.normalize", "must be a boolean")
    p = cfg.policy
    for name in ("hidden", "num_envs", "horizon", "epochs", "minibatches"):
        v = getattr(p, name)
        _check(_is_int(v) and v > 0, f"policy.{name}", "must be a positive integer")
    _check(_is_num(p.learning_rate) and p.learning_rate > 0, "policy.learning_rate", "must be positive")
    for name in ("gamma", "gae_lambda"):
        v = getattr(p, name)
        _check(_is_num(v) and 0 <= v <= 1, f"policy.{name}", "must lie in [0, 1]")
    _check(p.gamma_int is None or (_is_num(p.gamma_int) and 0 <= p.gamma_int <= 1), "policy.gamma_int",
           "must be null or lie in [0, 1]")
    _check(_is_num(p.eta) and p.eta >= 0, "policy.eta", "must be non-negative")
    _check(_is_num(p.clip_eps) and p.clip_eps > 0, "policy.clip_eps", "must be positive")
    _check(_is_num(p.entropy_coef) and p.entropy_coef >= 0, "policy.entropy_coef", "must be non-negative")
    _check(p.target_kl is None or (_is_num(p.target_kl) and p.target_kl > 0), "policy.target_kl",
           "must be null or positive")
    _check(_is_num(p.init_log_std), "policy.init_log_std", "must be a number")
    _check(_is_num(cfg.metrics.heatmap_bin) and cfg.metrics.heatmap_bin > 0, "metrics.heatmap_bin", "must be positive")
    _check(_is_num(cfg.metrics.boundary_radius) and cfg.metrics.boundary_radius > 0, "metrics.boundary_radius",
           "must be positive")
    _check(_is_num(cfg.metrics.boundary_tolerance) and cfg.metrics.boundary_tolerance >= 0,
           "metrics.boundary_tolerance", "must be non-negative")
    _check(isinstance(cfg.seeds, list) and len(cfg.seeds) > 0, "seeds", "must be a non-empty list")
    for i, s in enumerate(cfg.seeds):
        _check(_is_int(s) and s >= 0, f"seeds[{i}]", "must be a non-negative integer")
    _check(len(set(cfg.seeds)) == len(cfg.seeds), "seeds", "must be distinct")
    _check(_is_int(cfg.budget) and cfg.budget > 0, "budget", "must be a positive integer")
    _check(cfg.mode in MODES, "mode", f"must be one of {MODES}")
    _check(_is_int(cfg.workers) and cfg.workers > 0, "workers", "must be a positive integer")
    _check(isinstance(cfg.out_dir, str) and cfg.out_dir != "", "out_dir", "must be a non-empty string")


def env_overrides(environ: dict | None = None) -> dict:
    """Nested dict of overrides taken from ``MIME_RL__a__b=value`` variables."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in key[len(ENV_PREFIX):].split("__") if p]
        if not path:
            continue
        try:
            value = _load_yaml(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(".".join(path), f"unparseable environment override: {exc}") from exc
        _set_path(out, path, value)
    return out


def load_config(path, environ: dict | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc}") from exc
    try:
        data = _load_yaml(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("", f"malformed YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("", "config root must be a mapping")
    return from_dict(_merge(data, env_overrides(environ)))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def parse_config(text: str) -> ExperimentConfig:
    """Inverse of ``dump_config``. A resolved dump names every key, so presets have no effect on it."""
    try:
        data = _load_yaml(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("", f"malformed YAML: {exc}") from exc
    return from_dict(data)
