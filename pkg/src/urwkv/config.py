"""Model and run configuration.

One flat JSON document configures everything; unknown keys are a hard error
so typos cannot silently fall back to defaults. The ablation switches
(``lan_enabled``, ``ssf_enabled``, ``token_shift_state``,
``token_shift_qshift``) select the reduced variants used in the ablation
harness without touching any other code path.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

__all__ = ["LossWeights", "TrainSettings", "UrwkvConfig"]

_STATE_MODES = ("none", "single", "multi")


@dataclass
class LossWeights:
    w_l1: float = 1.0
    w_ssim: float = 1.0
    w_perceptual: float = 0.0


@dataclass
class TrainSettings:
    steps: int = 2000
    lr_max: float = 2e-4
    lr_min: float = 1e-6
    crop_size: int = 128
    augment: bool = True
    log_every: int = 1
    ckpt_every: int = 500


@dataclass
class UrwkvConfig:
    base_channels: int = 32
    num_enc_blocks: int = 3
    num_dec_blocks: int = 2
    alpha: float = 0.5
    channel_hidden_ratio: int = 4
    lan_enabled: bool = True
    ssf_enabled: bool = True
    token_shift_state: str = "multi"
    token_shift_qshift: bool = True
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)
    train: TrainSettings = field(default_factory=TrainSettings)

    def validate(self) -> "UrwkvConfig":
        if self.base_channels <= 0 or self.base_channels % 4:
            raise ConfigError(f"base_channels must be a positive multiple of 4, got {self.base_channels}")
        if self.num_enc_blocks < 1 or self.num_dec_blocks < 1:
            raise ConfigError("block counts must be at least 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.channel_hidden_ratio < 1:
            raise ConfigError("channel_hidden_ratio must be positive")
        if self.token_shift_state not in _STATE_MODES:
            raise ConfigError(f"token_shift_state must be one of {_STATE_MODES}, got {self.token_shift_state!r}")
        if self.train.steps < 1 or self.train.crop_size < 4:
            raise ConfigError("train.steps must be >= 1 and train.crop_size >= 4")
        if self.train.lr_max <= 0 or self.train.lr_min <= 0 or self.train.lr_min > self.train.lr_max:
            raise ConfigError("need 0 < lr_min <= lr_max")
        if min(self.loss.w_l1, self.loss.w_ssim, self.loss.w_perceptual) < 0:
            raise ConfigError("loss weights must be nonnegative")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "UrwkvConfig":
        nested = {"loss": LossWeights, "train": TrainSettings}

        def build(dc_type, data: dict, path: str):
            names = {f.name for f in dataclasses.fields(dc_type)}
            unknown = sorted(set(data) - names)
            if unknown:
                where = path or "top level"
                raise ConfigError(f"unknown config key(s) at {where}: {', '.join(unknown)}")
            kwargs = {}
            for name, value in data.items():
                sub = nested.get(name) if dc_type is cls else None
                if sub is not None:
                    if not isinstance(value, dict):
                        raise ConfigError(f"config key {name} must be an object")
                    kwargs[name] = build(sub, value, f"{path}{name}.")
                else:
                    kwargs[name] = value
            return dc_type(**kwargs)

        return build(cls, raw, "").validate()

    @classmethod
    def from_json(cls, path: str | Path) -> "UrwkvConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        return cls.from_dict(raw)
