"""JSON configuration shared by all subcommands.

Top-level keys: ``master_seed``, ``log_level`` and one object per section
(``rain``, ``pipeline``, ``network``, ``losses``, ``metrics``). Unknown keys
anywhere are rejected with their location. Command-line flags override file
values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import SplitPlan
from .losses import LossWeights
from .rain import RAIN_KEYS, CountModel, StreakGeometry, from_config

SECTION_KEYS = {
    "rain": RAIN_KEYS,
    "pipeline": set(SplitPlan.__dataclass_fields__),
    "network": {"levels", "base_channels", "seed"},
    "losses": {"lambda_p", "lambda_fm"},
    "metrics": {"iou_threshold", "n_classes"},
}
TOP_KEYS = {"master_seed", "log_level", *SECTION_KEYS}
LOG_LEVELS = {"debug", "info", "warning", "error"}


class ConfigError(ValueError):
    pass


@dataclass
class GlobalConfig:
    rain: dict = field(default_factory=dict)
    pipeline: dict = field(default_factory=dict)
    network: dict = field(default_factory=dict)
    losses: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    master_seed: int = 0
    log_level: str = "info"
    source: str = "<defaults>"

    def rain_settings(self) -> tuple[CountModel, StreakGeometry]:
        try:
            return from_config(self.rain)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"{self.source}: [rain]: {exc}") from None

    def split_plan(self, **overrides) -> SplitPlan:
        d = {"master_seed": self.master_seed, **self.pipeline, **overrides}
        try:
            return SplitPlan.from_dict(d)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"{self.source}: [pipeline]: {exc}") from None

    def loss_weights(self) -> LossWeights:
        try:
            return LossWeights(**self.losses)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{self.source}: [losses]: {exc}") from None


def parse_config(data: dict, source: str = "<config>") -> GlobalConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    unknown = sorted(set(data) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"{source}: unknown top-level key(s): {', '.join(unknown)}")
    sections = {}
    for name, allowed in SECTION_KEYS.items():
        sec = data.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"{source}: section '{name}' must be an object")
        bad = sorted(set(sec) - allowed)
        if bad:
            raise ConfigError(f"{source}: unknown key(s) in section '{name}': {', '.join(bad)}")
        sections[name] = dict(sec)
    level = data.get("log_level", "info")
    if level not in LOG_LEVELS:
        raise ConfigError(f"{source}: log_level must be one of {sorted(LOG_LEVELS)}")
    seed = data.get("master_seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"{source}: master_seed must be a 64-bit unsigned integer")
    cfg = GlobalConfig(**sections, master_seed=seed, log_level=level, source=source)
    cfg.rain_settings()  # validate eagerly
    return cfg


def load_config(path=None) -> GlobalConfig:
    if path is None:
        return GlobalConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_config(data, str(path))
