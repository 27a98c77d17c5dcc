"""Flat ``key = value`` run configuration.

One line per key, ``#`` starts a comment, blank lines are ignored.  Tuple
valued keys take comma-separated numbers (``intercept = -0.0005, -0.0009``).
Unknown keys are errors: a typo in a hyperparameter must never pass silently.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .env import EnvParams
from .errors import ConfigError
from .networks import NetConfig
from .option_critic import TrainConfig

_ENV = EnvParams()
_NET = NetConfig()
_TRAIN = TrainConfig()


@dataclass(frozen=True)
class RunConfig:
    # environment
    m: int = _ENV.m
    n: int = _ENV.n
    h: int = _ENV.h
    intercept: tuple[float, float] = _ENV.intercept
    self_coef: tuple[float, float] = _ENV.self_coef
    opp_coef: tuple[float, float] = _ENV.opp_coef
    bye_bonus: tuple[float, float] = _ENV.bye_bonus
    noise_std: float = _ENV.noise_std
    # networks
    embed_width: int = _NET.embed_width
    encoder_depth: int = _NET.encoder_depth
    head_hidden: int = _NET.head_hidden
    pooling: str = _NET.pooling
    init: str = _NET.init
    # training
    gamma: float = _TRAIN.gamma
    lr_policy: float = _TRAIN.lr_policy
    lr_critic: float = _TRAIN.lr_critic
    optimizer: str = _TRAIN.optimizer
    iterations: int = _TRAIN.iterations
    eps_start: float = _TRAIN.eps_start
    eps_end: float = _TRAIN.eps_end
    eps_decay_fraction: float = _TRAIN.eps_decay_fraction
    baseline: str = _TRAIN.baseline
    allow_byes: bool = _TRAIN.allow_byes
    episode_length: int = _TRAIN.episode_length
    reward_scale: float = _TRAIN.reward_scale
    grad_clip: float = _TRAIN.grad_clip
    divergence_limit: float = _TRAIN.divergence_limit
    seed: int = _TRAIN.seed
    checkpoint_every: int = 0
    # evaluation
    eval_horizon: int = 1000
    eval_repetitions: int = 20
    eval_greedy_actions: bool = False
    baseline_pairing: str = "random"

    def __post_init__(self):
        # building the component configs runs their validation
        self.env_params()
        self.net_config()
        self.train_config()
        if self.eval_horizon < 1:
            raise ConfigError(f"eval_horizon must be >= 1, got {self.eval_horizon}")
        if self.eval_repetitions < 1:
            raise ConfigError(f"eval_repetitions must be >= 1, got {self.eval_repetitions}")
        if self.baseline_pairing not in ("random", "greedy"):
            raise ConfigError(f"baseline_pairing must be 'random' or 'greedy', got {self.baseline_pairing!r}")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")

    def _pick(self, cls):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def env_params(self) -> EnvParams:
        return self._pick(EnvParams)

    def net_config(self) -> NetConfig:
        return self._pick(NetConfig)

    def train_config(self) -> TrainConfig:
        return self._pick(TrainConfig)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _parse_value(key: str, raw: str):
    kind = _TYPES[key]
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind.startswith("tuple"):
        return tuple(float(x) for x in raw.split(","))
    return raw


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    try:
        return RunConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def run_config_load(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
