"""Strict JSON run configuration for the command-line tool.

Example::

    {
      "window": {"window_ms": 25, "sample_rate_hz": 16000},
      "frontend": {"n_filters": 40, "kernel_width": 401, "stride": 160},
      "classifier": {"hidden_dim": 128},
      "train": {"epochs": 30, "batch_size": 32, "learning_rate": 0.001, "seed": 0},
      "data": {"manifest": "data/manifest.json", "balanced_per_class": 400}
    }

Every section and key is optional; unknown keys are rejected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .classifier import CompactCnnConfig
from .errors import ConfigurationError
from .training import TrainConfig

FRONTEND_KEYS = {"n_filters", "kernel_width", "f_min_hz", "f_max_hz", "sigma_p", "stride",
                 "pool_width", "alpha", "delta", "r", "s", "eps"}
WINDOW_KEYS = {"window_ms", "sample_rate_hz"}
CLASSIFIER_KEYS = {"conv_blocks", "hidden_dim"}
DATA_KEYS = {"manifest", "balanced_per_class"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
SECTIONS = {"window": WINDOW_KEYS, "frontend": FRONTEND_KEYS, "classifier": CLASSIFIER_KEYS,
            "train": TRAIN_KEYS, "data": DATA_KEYS}


@dataclass
class RunConfig:
    window: dict = field(default_factory=dict)
    frontend: dict = field(default_factory=dict)
    classifier: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(SECTIONS)
        if unknown:
            raise ConfigurationError(f"unknown config section(s): {', '.join(sorted(unknown))}")
        for section, allowed in SECTIONS.items():
            extra = set(d.get(section, {})) - allowed
            if extra:
                raise ConfigurationError(f"unknown key(s) in [{section}]: {', '.join(sorted(extra))}")
        return cls(**{k: dict(v) for k, v in d.items()})

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc

    def override(self, section: str, **values) -> None:
        for key, value in values.items():
            if value is not None:
                if key not in SECTIONS[section]:
                    raise ConfigurationError(f"unknown key {key} in [{section}]")
                getattr(self, section)[key] = value

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train)

    def cnn_config(self, n_classes: int) -> CompactCnnConfig:
        return CompactCnnConfig(n_classes=n_classes, **self.classifier)
