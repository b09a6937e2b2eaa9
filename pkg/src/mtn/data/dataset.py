"""Dialogue corpus ingestion.

The corpus is a UTF-8 JSON file::

    {"dialogs": [{"video_id": str, "caption": str, "summary": str,
                  "dialog": [{"question": str, "answer": str, "candidates"?: [str]}]}]}

Every turn of every dialogue becomes one :class:`DialogueExample`.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .text import EOS, SOS, UNK, Vocabulary, tokenize


class DatasetFormatError(ValueError):
    pass


@dataclass
class DialogueExample:
    dialogue_id: int
    turn: int  # 1-based
    video_id: str
    caption: list[str]  # caption + summary
    history: list[tuple[list[str], list[str]]]
    query: list[str]
    target: list[str]  # wrapped in <sos> ... <eos>
    candidates: list[list[str]] | None = None
    gold_index: int | None = None

    def history_tokens(self) -> list[str]:
        """Flattened history stream ``q <eos> a <eos> ...``."""
        out: list[str] = []
        for q, a in self.history:
            out += list(q) + [EOS] + list(a) + [EOS]
        return out

    @property
    def answer(self) -> list[str]:
        return self.target[1:-1]


def _oov(tokens: list[str], vocab: Vocabulary | None) -> list[str]:
    if vocab is None:
        return tokens
    return [t if t in vocab else UNK for t in tokens]


def parse_dialogs(obj, vocab: Vocabulary | None = None,
                  max_history: int = 10) -> list[DialogueExample]:
    if max_history < 1:
        raise ValueError("max_history must be >= 1")
    if not isinstance(obj, dict) or not isinstance(obj.get("dialogs"), list):
        raise DatasetFormatError("top level must be an object with a 'dialogs' list")
    examples: list[DialogueExample] = []
    for di, dlg in enumerate(obj["dialogs"]):
        try:
            vid = str(dlg["video_id"])
            caption = tokenize(dlg.get("caption", "")) + tokenize(dlg.get("summary", ""))
            turns = dlg["dialog"]
            if not isinstance(turns, list):
                raise TypeError("'dialog' is not a list")
            qa = [(tokenize(t["question"]), tokenize(t["answer"])) for t in turns]
        except (KeyError, TypeError, AttributeError) as exc:
            raise DatasetFormatError(f"dialogue {di}: malformed entry ({exc})") from None
        caption = _oov(caption, vocab)
        qa = [(_oov(q, vocab), _oov(a, vocab)) for q, a in qa]
        for t, ((q, a), raw) in enumerate(zip(qa, turns)):
            hist = qa[max(0, t - max_history):t]
            cands = None
            gold = None
            if "candidates" in raw:
                cands = [_oov(tokenize(c), vocab) for c in raw["candidates"]]
                gold = raw.get("gold_index")
            examples.append(DialogueExample(
                dialogue_id=di, turn=t + 1, video_id=vid, caption=caption,
                history=[(list(hq), list(ha)) for hq, ha in hist], query=list(q),
                target=[SOS] + list(a) + [EOS], candidates=cands, gold_index=gold))
    return examples


def load_dataset(path: str | os.PathLike, vocab: Vocabulary | None = None,
                 max_history: int = 10) -> list[DialogueExample]:
    """Read a dialogue JSON file; history keeps the most recent ``max_history`` turns."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: invalid JSON ({exc})") from None
    return parse_dialogs(obj, vocab, max_history)


def corpus_tokens(examples: Sequence[DialogueExample]) -> list[list[str]]:
    """One token list per distinct text field, for vocabulary building."""
    seqs: list[list[str]] = []
    seen_captions: set[int] = set()
    for ex in examples:
        if ex.dialogue_id not in seen_captions:
            seen_captions.add(ex.dialogue_id)
            seqs.append(ex.caption)
        seqs.append(ex.query)
        seqs.append(ex.answer)
    return seqs


def write_references(examples: Sequence[DialogueExample], path: str | os.PathLike) -> None:
    """Gold answers in the generation JSON-lines format."""
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps({"dialogue_id": ex.dialogue_id, "turn": ex.turn,
                                "response": " ".join(ex.answer)}) + "\n")
