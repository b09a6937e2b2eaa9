"""MTNF feature files: one (rows x cols) float32 matrix per video and modality.

Layout (little-endian): b"MTNF", u16 version (=1), u32 rows, u32 cols, then
rows*cols IEEE-754 float32 values in row-major order. Files live at
``<dir>/<modality>/<video_id>.mtnf``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"MTNF"
VERSION = 1
_HEADER = struct.Struct("<4sHII")


class FeatureFormatError(ValueError):
    def __init__(self, msg: str, offset: int, path=None):
        where = f"{path}: " if path else ""
        super().__init__(f"{where}{msg} (byte offset {offset})")
        self.offset = offset


@dataclass
class ModalityFeatures:
    modality: str
    matrix: np.ndarray  # numSeqs x d_m, float32

    @property
    def num_seqs(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def encode_features(matrix: np.ndarray) -> bytes:
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"feature matrix must be 2-d and non-empty, got {m.shape}")
    return _HEADER.pack(MAGIC, VERSION, m.shape[0], m.shape[1]) + m.tobytes()


def decode_features(buf: bytes, path=None) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FeatureFormatError(f"truncated header ({len(buf)} bytes)", len(buf), path)
    magic, version, rows, cols = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FeatureFormatError(f"bad magic {magic!r}", 0, path)
    if version != VERSION:
        raise FeatureFormatError(f"unsupported version {version}", 4, path)
    if rows < 1 or cols < 1:
        raise FeatureFormatError(f"empty matrix {rows}x{cols}", 6, path)
    need = rows * cols * 4
    have = len(buf) - _HEADER.size
    if have != need:
        raise FeatureFormatError(
            f"payload has {have} bytes but {rows}x{cols} float32 needs {need}",
            _HEADER.size + min(have, need), path)
    return np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(rows, cols).astype(np.float32)


def write_features(path: str | os.PathLike, matrix: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_features(matrix))


def load_features(path: str | os.PathLike, modality: str | None = None) -> ModalityFeatures:
    path = Path(path)
    matrix = decode_features(path.read_bytes(), path)
    return ModalityFeatures(modality or path.parent.name, matrix)


class FeatureStore:
    """video_id -> {modality: matrix}, loaded from the directory convention or built in memory."""

    def __init__(self, data: dict[str, dict[str, np.ndarray]] | None = None):
        self.data = data or {}

    @classmethod
    def from_dir(cls, root: str | os.PathLike, modalities: list[str]) -> "FeatureStore":
        root = Path(root)
        data: dict[str, dict[str, np.ndarray]] = {}
        for m in modalities:
            mdir = root / m
            if not mdir.is_dir():
                raise FileNotFoundError(f"no feature directory for modality {m!r} under {root}")
            for f in sorted(mdir.glob("*.mtnf")):
                data.setdefault(f.stem, {})[m] = load_features(f, m).matrix
        return cls(data)

    def save(self, root: str | os.PathLike) -> None:
        root = Path(root)
        for vid in sorted(self.data):
            for m, mat in sorted(self.data[vid].items()):
                write_features(root / m / f"{vid}.mtnf", mat)

    def get(self, video_id: str, modality: str) -> np.ndarray:
        try:
            return self.data[video_id][modality]
        except KeyError:
            raise KeyError(f"missing {modality!r} features for video {video_id!r}") from None

    def zeroed(self) -> "FeatureStore":
        """Same shapes, all values zero (feature-ablation control)."""
        return FeatureStore({v: {m: np.zeros_like(x) for m, x in d.items()}
                             for v, d in self.data.items()})
