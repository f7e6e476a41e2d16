"""Run configuration files.

A run config is a JSON object with exactly these top-level keys (all
optional except ``paths.dataset`` for training):

    model       ModelConfig fields; modality_dims and num_classes default to the dataset's
    optimizer   OptimizerConfig fields
    curriculum  {enabled, num_buckets, k, b, epochs_per_bucket}
    epochs, batch_size, seed
    paths       {dataset, dev, wheel, checkpoint, log}

Unknown keys at any level are rejected. Relative paths resolve against the
config file's directory.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from lsdgnn.errors import ConfigError, FormatError
from lsdgnn.model import ModelConfig
from lsdgnn.numerics.optim import OptimizerConfig


@dataclass
class CurriculumConfig:
    enabled: bool = True
    num_buckets: int = 5
    k: float = 1.0
    b: float = 0.4
    epochs_per_bucket: int = 1

    def __post_init__(self):
        if self.num_buckets < 1:
            raise ConfigError(f"curriculum.num_buckets must be >= 1, got {self.num_buckets}")
        if self.epochs_per_bucket < 1:
            raise ConfigError(f"curriculum.epochs_per_bucket must be >= 1, got {self.epochs_per_bucket}")


@dataclass
class PathsConfig:
    dataset: str | None = None
    dev: str | None = None
    wheel: str | None = None
    checkpoint: str | None = None
    log: str | None = None


@dataclass
class RunConfig:
    model: dict = field(default_factory=dict)  # ModelConfig overrides
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        _check_keys(self.model, ModelConfig, "model")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    def model_config(self, modality_dims: Mapping[str, int], num_classes: int) -> ModelConfig:
        """The ModelConfig for a dataset; explicit settings must agree with it."""
        raw = dict(self.model)
        for key, value in (("modality_dims", dict(modality_dims)), ("num_classes", num_classes)):
            if key in raw:
                given = raw[key]
                if key == "modality_dims":
                    given = {m: int(given.get(m, 0)) for m in value}
                if given != value:
                    raise ConfigError(f"model.{key}={raw[key]} does not match the dataset ({value})")
            raw[key] = value
        return ModelConfig(**raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> RunConfig:
        if not isinstance(raw, Mapping):
            raise ConfigError("run config must be an object")
        _check_keys(raw, cls, "run config")
        kw = dict(raw)
        if "model" in kw and not isinstance(kw["model"], Mapping):
            raise ConfigError("model must be an object")
        for key, sub in (("optimizer", OptimizerConfig), ("curriculum", CurriculumConfig), ("paths", PathsConfig)):
            if key in kw:
                if not isinstance(kw[key], Mapping):
                    raise ConfigError(f"{key} must be an object")
                _check_keys(kw[key], sub, key)
                kw[key] = sub(**kw[key])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _check_keys(raw: Mapping, cls, where: str) -> None:
    extra = set(raw) - {f.name for f in dataclasses.fields(cls)}
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc.msg}", exc.lineno) from None
    run = RunConfig.from_dict(raw)
    base = path.parent
    for f in dataclasses.fields(PathsConfig):
        value = getattr(run.paths, f.name)
        if value is not None and not Path(value).is_absolute():
            setattr(run.paths, f.name, str(base / value))
    return run
