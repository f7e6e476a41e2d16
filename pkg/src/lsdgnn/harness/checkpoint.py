"""Checkpoint files: JSON with shortest round-trip floats, so every value survives bitwise."""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lsdgnn.errors import FormatError, IncompatibleCheckpointError
from lsdgnn.model import ModelConfig, init_params
from lsdgnn.numerics.tensor import ParameterStore

FORMAT_VERSION = 1
TOP_KEYS = ("format_version", "run_config", "model_config", "emotion_labels", "epoch", "rng_state", "params")


@dataclass
class Checkpoint:
    run_config: dict
    model_config: dict
    emotion_labels: list[str]
    params: "OrderedDict[str, np.ndarray]"
    rng_state: dict
    epoch: int
    format_version: int = FORMAT_VERSION
    extra: dict = field(default_factory=dict, repr=False)  # not serialized

    def model(self) -> ModelConfig:
        return ModelConfig(**self.model_config)

    def parameter_store(self) -> ParameterStore:
        store = init_params(self.model(), seed=0)
        store.load_state_dict(self.params)
        return store


def dumps_checkpoint(ckpt: Checkpoint) -> str:
    body = {
        "format_version": ckpt.format_version,
        "run_config": ckpt.run_config,
        "model_config": ckpt.model_config,
        "emotion_labels": list(ckpt.emotion_labels),
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "params": {
            name: {"shape": list(arr.shape), "data": [float(x) for x in np.asarray(arr).reshape(-1)]}
            for name, arr in ckpt.params.items()
        },
    }
    return json.dumps(body, separators=(",", ":"), allow_nan=False) + "\n"


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_text(dumps_checkpoint(ckpt))


def loads_checkpoint(text: str) -> Checkpoint:
    """Parse a checkpoint; nothing is returned unless the whole file is valid."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"checkpoint is not valid JSON ({exc.msg})", exc.lineno) from None
    if not isinstance(raw, dict):
        raise FormatError("checkpoint must be a JSON object")
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpointError(
            f"checkpoint format_version {version!r} is not supported (expected {FORMAT_VERSION})"
        )
    missing = [k for k in TOP_KEYS if k not in raw]
    if missing:
        raise FormatError(f"checkpoint lacks keys {missing}")
    params = OrderedDict()
    for name, entry in raw["params"].items():
        try:
            shape = tuple(int(s) for s in entry["shape"])
            arr = np.array(entry["data"], dtype=np.float64)
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"parameter {name!r} is malformed") from None
        if arr.ndim != 1 or arr.size != int(np.prod(shape)):
            raise FormatError(f"parameter {name!r}: {arr.size} values for shape {shape}")
        params[name] = arr.reshape(shape)
    return Checkpoint(
        run_config=raw["run_config"],
        model_config=raw["model_config"],
        emotion_labels=list(raw["emotion_labels"]),
        params=params,
        rng_state=raw["rng_state"],
        epoch=int(raw["epoch"]),
        format_version=version,
    )


def load_checkpoint(path: str | Path) -> Checkpoint:
    return loads_checkpoint(Path(path).read_text())
