"""Run configuration: training hyperparameters and their defaults."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigInvalid
from .rewards import RewardWeights


@dataclass(frozen=True)
class TrainConfig:
    lr_policy: float = 1e-4
    lr_q: float = 1e-3
    lr_alpha: float = 1e-4
    gamma: float = 0.99
    tau: float = 0.005
    target_entropy: float = -2.0
    episodes: int = 35000
    buffer_size: int = 100000
    buffer_min_size: int = 1000
    batch_size: int = 512
    simulation_hz: int = 10
    policy_hz: int = 10

    hidden_width: int = 256
    hidden_layers: int = 2
    init_alpha: float = 1.0
    mask_terminal_bootstrap: bool = True
    alpha1: float = -1.0
    alpha2: float = -2.0
    alpha3: float = -1.0
    alpha4: float = 1.0

    bc_epochs: int = 100
    bc_lr: float = 1e-4
    bc_batch_size: int = 64

    exclude_collisions_from_length_error: bool = True
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            expected = {"int": int, "float": (int, float), "bool": bool}[f.type]
            if isinstance(val, bool) and f.type != "bool" or not isinstance(val, expected):
                raise ConfigInvalid(f"{f.name} must be {f.type}, got {val!r}")
        positive = ("lr_policy", "lr_q", "lr_alpha", "buffer_size", "batch_size",
                    "hidden_width", "hidden_layers", "init_alpha", "bc_lr", "bc_batch_size")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigInvalid(f"{name} must be positive")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.tau <= 1.0:
            raise ConfigInvalid("gamma and tau must lie in [0, 1]")
        if self.episodes < 0 or self.bc_epochs < 0 or self.buffer_min_size < 0:
            raise ConfigInvalid("episode/epoch counts must be non-negative")
        if self.buffer_min_size > self.buffer_size:
            raise ConfigInvalid("buffer_min_size exceeds buffer_size")
        if self.simulation_hz != 10 or self.policy_hz != 10:
            raise ConfigInvalid("only 10 Hz simulation and policy rates are supported")

    @property
    def weights(self) -> RewardWeights:
        return RewardWeights(self.alpha1, self.alpha2, self.alpha3, self.alpha4)

    def replace(self, **changes) -> "TrainConfig":
        return from_dict({**self.to_dict(), **changes})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def from_dict(data: dict) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {', '.join(unknown)}")
    # JSON has no int/float distinction for whole numbers
    coerced = {}
    for f in fields(TrainConfig):
        if f.name in data:
            val = data[f.name]
            if f.type == "float" and isinstance(val, int) and not isinstance(val, bool):
                val = float(val)
            coerced[f.name] = val
    return TrainConfig(**coerced)


def load_config(path) -> TrainConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigInvalid("config must be a JSON object")
    return from_dict(data)


def save_config(config: TrainConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), sort_keys=True, indent=1) + "\n",
                          encoding="utf-8")


DESK_OVERRIDES = {"episodes": 3000, "hidden_width": 64, "batch_size": 128,
                  "bc_epochs": 300, "bc_batch_size": 16}


def desk_config(**changes) -> TrainConfig:
    """Scaled-down settings for single-core runs; learning rates etc. unchanged."""
    return TrainConfig(**{**DESK_OVERRIDES, **changes})
