"""Checkpoint archives: ``manifest.json`` plus ``params.bin`` (little-endian float32 payloads)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data.text import Vocabulary
from ..model import ModelConfig, MtnModel
from ..numerics.optim import AdamState

FORMAT = "mtn-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: MtnModel
    vocab: Vocabulary
    step: int
    adam: AdamState | None
    extra: dict


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def save_checkpoint(path: str | os.PathLike, model: MtnModel, vocab: Vocabulary, step: int = 0,
                    adam: AdamState | None = None, extra: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, chunks, offset = [], [], 0
    tensors = [(name, p.data) for name, p in model.named_parameters()]
    if adam is not None:
        tensors += [(f"adam.m.{k}", adam.m[k]) for k in adam.m]
        tensors += [(f"adam.v.{k}", adam.v[k]) for k in adam.v]
    for name, arr in tensors:
        buf = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "byte_offset": offset})
        chunks.append(buf)
        offset += len(buf)
    manifest = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "config": model.cfg.to_dict(),
        "vocab": vocab.to_dict(),
        "step": int(step),
        "adam_step": None if adam is None else int(adam.step_count),
        "tensors": entries,
        "extra": extra or {},
    }
    (path / "params.bin").write_bytes(b"".join(chunks))
    (path / "manifest.json").write_text(_dumps(manifest), encoding="utf-8")
    return path


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        blob = (path / "params.bin").read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from None
    if manifest.get("format") != FORMAT or manifest.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: not a version-{FORMAT_VERSION} {FORMAT} archive")
    cfg = ModelConfig.from_dict(manifest["config"])
    vocab = Vocabulary.from_dict(manifest["vocab"])
    if cfg.vocab_size != len(vocab):
        raise CheckpointError(f"{path}: config vocab_size {cfg.vocab_size} != vocabulary {len(vocab)}")
    model = MtnModel(cfg)
    arrays = {}
    for e in manifest["tensors"]:
        n = int(np.prod(e["shape"])) * 4
        lo = e["byte_offset"]
        if lo + n > len(blob):
            raise CheckpointError(f"{path}: tensor {e['name']!r} runs past end of params.bin")
        arrays[e["name"]] = np.frombuffer(blob, dtype="<f4", count=n // 4, offset=lo).reshape(e["shape"])
    params = dict(model.named_parameters())
    missing = set(params) - set(arrays)
    if missing:
        raise CheckpointError(f"{path}: missing tensors {sorted(missing)}")
    for name, p in params.items():
        if tuple(arrays[name].shape) != p.shape:
            raise CheckpointError(f"{path}: shape mismatch for {name!r}")
        p.data = arrays[name].astype(p.dtype)
    adam = None
    if manifest.get("adam_step") is not None:
        dt = cfg.np_dtype
        adam = AdamState(m={k: arrays[f"adam.m.{k}"].astype(dt) for k in params},
                         v={k: arrays[f"adam.v.{k}"].astype(dt) for k in params},
                         step_count=manifest["adam_step"])
    return Checkpoint(model.eval(), vocab, manifest["step"], adam, manifest.get("extra", {}))
