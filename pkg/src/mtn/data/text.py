from __future__ import annotations

import re
from collections import Counter
from typing import Iterable, Sequence

PAD, SOS, EOS, UNK = "<pad>", "<sos>", "<eos>", "<unk>"
RESERVED = (PAD, SOS, EOS, UNK)
PAD_ID, SOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

_PUNCT = re.compile(r'([.,!?;:"()])')


def tokenize(text: str) -> list[str]:
    """Lower-case, detach the marks . , ! ? ; : " ( ) and split on whitespace."""
    return _PUNCT.sub(r" \1 ", text.lower()).split()


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


class Vocabulary:
    """Bidirectional token <-> id map with the four reserved ids first."""

    def __init__(self, tokens: Iterable[str] = (), min_freq: int = 1):
        self.min_freq = min_freq
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for t in tokens:
            if t not in self.stoi:
                self.stoi[t] = len(self.itos)
                self.itos.append(t)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id_of(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def token_of(self, i: int) -> str:
        return self.itos[i]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Sequence[int], strip: bool = True) -> list[str]:
        out = [self.itos[i] for i in ids]
        if strip:
            out = [t for t in out if t not in (PAD, SOS, EOS)]
        return out

    def to_dict(self) -> dict:
        return {"tokens": self.itos[len(RESERVED):], "min_freq": self.min_freq}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(d["tokens"], d.get("min_freq", 1))


def build_vocab(token_corpus: Iterable[Sequence[str]], min_freq: int = 2) -> Vocabulary:
    """Keep tokens seen at least ``min_freq`` times, most frequent first, ties lexicographic."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts = Counter(t for seq in token_corpus for t in seq if t not in RESERVED)
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    return Vocabulary(kept, min_freq)
