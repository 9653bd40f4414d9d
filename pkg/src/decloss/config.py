"""Flat ``section.key = value`` run configuration.

Example::

    # enhancement
    enhance.alpha = 1.0
    enhance.mu = 12
    contrast.eta = 16.3
    weights.w3 = 3e-5
    train.phase2_epochs = 20

Unknown sections or keys are rejected. ``none`` sets an optional value to None.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .fourier import EnhanceConfig
from .icoo import IcooConfig
from .losses import ContrastConfig, LossWeights
from .toy.train import TrainConfig

_NESTED_TRAIN = ("weights", "enhance", "contrast")


def _section_types() -> dict:
    return {
        "enhance": EnhanceConfig,
        "contrast": ContrastConfig,
        "icoo": IcooConfig,
        "weights": LossWeights,
        "train": TrainConfig,
    }


def _keys(cls) -> dict:
    return {f.name: f for f in fields(cls) if not (cls is TrainConfig and f.name in _NESTED_TRAIN)}


def _parse_value(raw: str, annotation: str, key: str):
    text = raw.strip()
    if "Optional" in annotation and text.lower() == "none":
        return None
    try:
        if "bool" in annotation:
            lowered = text.lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if "int" in annotation:
            return int(text)
        if "float" in annotation:
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {annotation}") from None
    return text.strip("\"'")


@dataclass
class RunConfig:
    enhance: EnhanceConfig = field(default_factory=EnhanceConfig)
    contrast: ContrastConfig = field(default_factory=ContrastConfig)
    icoo: IcooConfig = field(default_factory=IcooConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        # the training run carries its own copies of the loss settings
        self.train = replace(self.train, weights=self.weights, enhance=self.enhance, contrast=self.contrast)

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> "RunConfig":
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            values[key] = raw
        return cls().updated(values, source)

    @classmethod
    def load(cls, path=None, overrides: Optional[dict] = None) -> "RunConfig":
        cfg = cls.parse(Path(path).read_text(), str(path)) if path else cls()
        return cfg.updated(overrides or {}, "command line")

    def updated(self, values: dict, source: str = "overrides") -> "RunConfig":
        """Apply ``{"section.key": value}``; string values are parsed by field type."""
        types = _section_types()
        changes = {name: {} for name in types}
        for key, raw in values.items():
            section, _, name = key.partition(".")
            if section not in types or name not in _keys(types[section]):
                raise ConfigError(f"{source}: unknown config key {key!r}")
            f = _keys(types[section])[name]
            annotation = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
            changes[section][name] = _parse_value(raw, annotation, key) if isinstance(raw, str) else raw
        sections = {}
        for name in types:
            current = getattr(self, name)
            sections[name] = replace(current, **changes[name]) if changes[name] else current
        return RunConfig(**sections)

    def to_dict(self) -> dict:
        out = {}
        for name in _section_types():
            d = dataclasses.asdict(getattr(self, name))
            if name == "train":
                for nested in _NESTED_TRAIN:
                    d.pop(nested)
            out[name] = d
        return out

    def dump(self) -> str:
        lines = []
        for section, d in self.to_dict().items():
            for key, value in d.items():
                lines.append(f"{section}.{key} = {'none' if value is None else value}")
        return "\n".join(lines) + "\n"
