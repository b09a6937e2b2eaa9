"""Run configuration: every knob of a run as flat dotted keys (``model.d_model``, ``train.seed``...)."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .engine.train import TrainConfig
from .model import ModelConfig


class RunConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    dataset: str | None = None
    valid_dataset: str | None = None
    features: str | None = None
    checkpoint_dir: str | None = None
    checkpoint: str | None = None
    output: str | None = None
    hypotheses: str | None = None
    references: str | None = None
    report: str | None = None


@dataclass
class DataConfig:
    min_freq: int = 2


@dataclass
class DecodeConfig:
    beam_size: int = 5
    length_penalty: float = 1.0
    max_len: int = 30
    greedy: bool = False


@dataclass
class SynthConfig:
    seed: int = 7
    n_dialogues: int = 32
    grammar_size: int = 4
    n_turns: int = 5
    out: str | None = None


SECTIONS = {
    "model": ModelConfig,
    "train": TrainConfig,
    "data": DataConfig,
    "decode": DecodeConfig,
    "paths": PathsConfig,
    "synth": SynthConfig,
}


@dataclass
class RunConfig:
    """Defaults are the Base setting: N=6, h=8, d=512, p=0.5, beam 5, penalty 1.0, max_len 30."""

    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def to_flat(self) -> dict[str, Any]:
        flat = {}
        for sec in SECTIONS:
            obj = getattr(self, sec)
            for f in dataclasses.fields(obj):
                v = getattr(obj, f.name)
                if f.name == "modalities":
                    v = [[m, d] for m, d in v]
                flat[f"{sec}.{f.name}"] = v
        return flat

    def dumps(self) -> str:
        return json.dumps(self.to_flat(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_flat(cls, flat: dict[str, Any]) -> "RunConfig":
        cfg = cls()
        for key, value in flat.items():
            cfg.set(key, value)
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise RunConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(obj, dict):
            raise RunConfigError(f"config {path} must be a JSON object of dotted keys")
        return cls.from_flat(obj)

    def set(self, key: str, value: Any) -> None:
        """Assign ``section.field``; string values are coerced to the field's type."""
        sec, _, name = key.partition(".")
        if sec not in SECTIONS or not name:
            raise RunConfigError(f"unknown config key {key!r}")
        obj = getattr(self, sec)
        types = {f.name: f.type for f in dataclasses.fields(obj)}
        if name not in types:
            raise RunConfigError(f"unknown config key {key!r}")
        try:
            setattr(obj, name, coerce(name, types[name], value))
        except (TypeError, ValueError) as exc:
            raise RunConfigError(f"{key}: cannot use {value!r} ({exc})") from None

    def model_config(self, vocab_size: int) -> ModelConfig:
        return dataclasses.replace(self.model, vocab_size=vocab_size,
                                   sim_probability=self.train.sim_probability)


def coerce(name: str, type_str, value):
    t = str(type_str)
    if name == "modalities":
        if isinstance(value, str):
            value = [part.split(":") for part in value.split(",") if part]
        return [(str(m), int(d)) for m, d in value]
    if value is None:
        if "None" in t:
            return None
        raise ValueError("value required")
    if isinstance(value, str) and value.lower() in ("none", "null") and "None" in t:
        return None
    if t.startswith("bool"):
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError("expected a boolean")
        return bool(value)
    if t.startswith("int"):
        if isinstance(value, float) and not value.is_integer():
            raise ValueError("expected an integer")
        return int(value)
    if t.startswith("float"):
        return float(value)
    return str(value)


def flag_specs() -> list[tuple[str, str]]:
    """(dotted key, help text) for every config field, used to generate CLI flags."""
    out = []
    for sec, cls in SECTIONS.items():
        for f in dataclasses.fields(cls):
            out.append((f"{sec}.{f.name}", str(f.type)))
    return out
