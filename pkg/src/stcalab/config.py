"""Experiment configuration: strict JSON loading and manifest round-tripping.

A config is a flat JSON object holding the sweep fields, plus optional
``train`` and ``gradient`` sub-objects.  Unknown keys anywhere are rejected,
so a typo in a grid name cannot silently fall back to a default.  A manifest
written by the CLI is itself a valid ``--config`` input.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .nn import ARCHITECTURES, TrainConfig
from .linalg import SeedSpec
from .errors import ConfigError
from .rd import GradientSettings, SweepConfig

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 2
    batch_size: int = 64
    learning_rate: float = 3e-4
    momentum: float = 0.9
    dense_lr_scale: float = 100.0
    zero_init_output: bool = True
    precision: str = "float32"
    train_pairs: int = 50000
    arch: str = ""  # empty: synthetic_net for gaussian sources, mnist_net for mnist
    s_x: int = 0  # code sparsity used to build training pairs; 0 means the first s_x grid value

    def to_train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
                           momentum=self.momentum, seed=SeedSpec(seed, "train"),
                           dense_lr_scale=self.dense_lr_scale, zero_init_output=self.zero_init_output,
                           precision=self.precision)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    sweep: SweepConfig = field(default_factory=SweepConfig)
    train: TrainSettings = field(default_factory=TrainSettings)

    def to_dict(self) -> dict:
        out = {"name": self.name}
        out.update(_plain(dataclasses.asdict(self.sweep)))
        out["train"] = _plain(dataclasses.asdict(self.train))
        return out

    def validate(self):
        self.sweep.validate()
        t = self.train
        if t.epochs < 0 or t.batch_size < 1 or t.learning_rate <= 0 or t.train_pairs < 1:
            raise ConfigError("train: need epochs >= 0, batch_size >= 1, learning_rate > 0, train_pairs >= 1")
        if not 0 <= t.momentum < 1:
            raise ConfigError("train: momentum must lie in [0, 1)")
        if t.dense_lr_scale <= 0 or t.precision not in ("float32", "float64"):
            raise ConfigError("train: dense_lr_scale must be positive and precision float32 or float64")
        if t.arch and t.arch not in ARCHITECTURES:
            raise ConfigError(f"train: unknown arch {t.arch!r}; choose from {sorted(ARCHITECTURES)}")
        return self


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def train_defaults(source: str) -> TrainSettings:
    """Training defaults per source.

    The relu-terminated MNIST decoder dies (all outputs pinned at zero) under
    the step sizes that suit the tanh-terminated Gaussian decoder, and its
    training split is small, so it gets a gentler rate and more epochs.
    """
    if source == "mnist":
        return TrainSettings(epochs=10, learning_rate=1e-4, dense_lr_scale=30.0)
    return TrainSettings()


def _build(cls, data: dict, where: str, base=None):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    base = cls() if base is None else base
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        default = getattr(base, key)
        if isinstance(default, tuple):
            if not isinstance(value, list) or not all(isinstance(v, int) for v in value):
                raise ConfigError(f"{where}.{key} must be a list of integers")
            value = tuple(value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}.{key} must be true or false")
        elif isinstance(default, int):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{where}.{key} must be an integer")
        elif isinstance(default, float):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{where}.{key} must be a number")
            value = float(value)
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"{where}.{key} must be a string")
        kwargs[key] = value
    return dataclasses.replace(base, **kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "manifest_version" in data:
        data = data.get("config", {})
    data = dict(data)
    name = data.pop("name", "experiment")
    if not isinstance(name, str) or not name or "/" in name:
        raise ConfigError("name must be a non-empty string without '/'")
    train_data = data.pop("train", {})
    gradient = _build(GradientSettings, data.pop("gradient", {}), "gradient")
    sweep = _build(SweepConfig, data, "config")
    train = _build(TrainSettings, train_data, "train", base=train_defaults(sweep.source))
    sweep = dataclasses.replace(sweep, gradient=gradient)
    return ExperimentConfig(name=name, sweep=sweep, train=train).validate()


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(data)


def manifest(command: str, cfg: ExperimentConfig, outputs: list[str], extra: dict | None = None) -> str:
    """Deterministic manifest text (sorted keys, no timestamps)."""
    from . import __version__
    doc = {"manifest_version": MANIFEST_VERSION, "package_version": __version__, "command": command,
           "config": cfg.to_dict(), "outputs": sorted(outputs)}
    if extra:
        doc["extra"] = extra
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
