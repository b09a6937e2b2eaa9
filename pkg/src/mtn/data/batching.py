from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import DialogueExample
from .features import FeatureStore
from .text import PAD_ID, SOS_ID, Vocabulary


def pad_ids(seqs: Sequence[Sequence[int]], pad: int = PAD_ID) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad to the longest sequence; returns (ids [B, L], lengths [B])."""
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    out = np.full((len(seqs), max(1, lengths.max(initial=0))), pad, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out, lengths


def _nonempty(ids: list[int]) -> list[int]:
    # an empty source stream would leave attention with no key; use a lone <sos>
    return ids if ids else [SOS_ID]


@dataclass
class Batch:
    examples: list[DialogueExample]
    his: np.ndarray
    cap: np.ndarray
    que: np.ndarray
    tgt: np.ndarray
    his_len: np.ndarray
    cap_len: np.ndarray
    que_len: np.ndarray
    tgt_len: np.ndarray
    feats: dict[str, np.ndarray] = field(default_factory=dict)       # m -> [B, S, d_m]
    feat_mask: dict[str, np.ndarray] = field(default_factory=dict)   # m -> [B, S] bool

    def __len__(self) -> int:
        return len(self.examples)

    @staticmethod
    def mask_of(lengths: np.ndarray, width: int) -> np.ndarray:
        return np.arange(width)[None, :] < lengths[:, None]

    def with_targets(self, targets: Sequence[Sequence[int]]) -> "Batch":
        tgt, tgt_len = pad_ids(targets)
        return replace(self, tgt=tgt, tgt_len=tgt_len)

    def target_lists(self) -> list[list[int]]:
        return [list(row[:n]) for row, n in zip(self.tgt, self.tgt_len)]


def collate(examples: Sequence[DialogueExample], vocab: Vocabulary,
            features: FeatureStore | None = None, modalities: Sequence[str] = ()) -> Batch:
    his, his_len = pad_ids([_nonempty(vocab.encode(e.history_tokens())) for e in examples])
    cap, cap_len = pad_ids([_nonempty(vocab.encode(e.caption)) for e in examples])
    que, que_len = pad_ids([_nonempty(vocab.encode(e.query)) for e in examples])
    tgt, tgt_len = pad_ids([vocab.encode(e.target) for e in examples])
    feats, fmask = {}, {}
    for m in modalities:
        if features is None:
            raise KeyError(f"modality {m!r} configured but no features supplied")
        mats = [features.get(e.video_id, m) for e in examples]
        S = max(x.shape[0] for x in mats)
        dims = {x.shape[1] for x in mats}
        if len(dims) != 1:
            raise ValueError(f"modality {m!r} has inconsistent widths {sorted(dims)}")
        arr = np.zeros((len(mats), S, dims.pop()), dtype=np.float32)
        mask = np.zeros((len(mats), S), dtype=bool)
        for i, x in enumerate(mats):
            arr[i, :x.shape[0]] = x
            mask[i, :x.shape[0]] = True
        feats[m], fmask[m] = arr, mask
    return Batch(list(examples), his, cap, que, tgt, his_len, cap_len, que_len, tgt_len,
                 feats, fmask)


def length_key(e: DialogueExample) -> tuple[int, int, int, int]:
    """Sort order: history, caption, question, then target length."""
    return (len(e.history_tokens()), len(e.caption), len(e.query), len(e.target))


def make_batches(examples: Sequence[DialogueExample], batch_size: int,
                 rng: np.random.Generator | None, vocab: Vocabulary,
                 features: FeatureStore | None = None,
                 modalities: Sequence[str] = ()) -> list[Batch]:
    """Length-sorted chunks of ``batch_size``; chunk order shuffled when ``rng`` is given."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = sorted(range(len(examples)), key=lambda i: (length_key(examples[i]), i))
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if rng is not None:
        perm = rng.permutation(len(chunks))
        chunks = [chunks[i] for i in perm]
    return [collate([examples[i] for i in c], vocab, features, modalities) for c in chunks]
