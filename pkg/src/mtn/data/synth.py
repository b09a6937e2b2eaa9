"""Seeded synthetic video-dialogue corpus for desk-scale training runs.

Each dialogue is tied to a fake video with two feature streams. The video's
action is planted in the ``visual`` stream and its sound in the ``audio``
stream as a fixed sign pattern over a window of rows, so the answers to
"what is the person doing ?" and "what can you hear ?" are only recoverable
from the features. Room and object answers come from the caption and summary.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .dataset import DialogueExample
from .features import FeatureStore

ACTIONS = ["running", "sitting", "cooking", "reading", "dancing", "sleeping", "cleaning", "eating"]
SOUNDS = ["music", "talking", "silence", "barking", "knocking", "laughing", "typing", "ringing"]
ROOMS = ["kitchen", "bedroom", "garage", "office", "hallway", "bathroom", "garden", "basement"]
OBJECTS = ["cup", "book", "phone", "towel", "broom", "pillow", "laptop", "bag"]

MODALITY_DIMS = {"audio": 8, "visual": 16}

# (question, answer template, grounding modality or None)
TEMPLATES = [
    ("what is the person doing ?", "the person is {action}", "visual"),
    ("what can you hear ?", "i can hear {sound}", "audio"),
    ("where is the person ?", "the person is in the {room}", None),
    ("is anyone else there ?", "no , only one person", None),
    ("what does the person hold ?", "the person holds a {obj}", None),
]


def _prototypes(rng: np.random.Generator, k: int, dim: int) -> np.ndarray:
    while True:
        protos = rng.choice([-1.0, 1.0], size=(k, dim))
        if len({tuple(p) for p in protos}) == k:
            return protos


def synth_corpus(seed: int, n_dialogues: int, grammar_size: int = 4, n_turns: int = 5,
                 num_seqs: tuple[int, int] = (6, 10), n_candidates: int = 10):
    """Return ``(dataset_json_obj, FeatureStore)``; fully determined by the arguments."""
    if n_dialogues < 1:
        raise ValueError("n_dialogues must be >= 1")
    if not 2 <= grammar_size <= len(ACTIONS):
        raise ValueError(f"grammar_size must be in [2, {len(ACTIONS)}]")
    rng = np.random.default_rng(seed)
    protos = {m: _prototypes(rng, grammar_size, d) for m, d in MODALITY_DIMS.items()}
    dialogs, feats = [], {}
    for i in range(n_dialogues):
        vid = f"vid{i:04d}"
        slots = {
            "action": ACTIONS[rng.integers(grammar_size)],
            "sound": SOUNDS[rng.integers(grammar_size)],
            "room": ROOMS[rng.integers(grammar_size)],
            "obj": OBJECTS[rng.integers(grammar_size)],
        }
        S = int(rng.integers(num_seqs[0], num_seqs[1] + 1))
        video = {}
        for m, d in MODALITY_DIMS.items():
            cls = (ACTIONS if m == "visual" else SOUNDS).index(
                slots["action"] if m == "visual" else slots["sound"])
            x = 0.5 * rng.standard_normal((S, d))
            w = (S + 1) // 2
            start = int(rng.integers(0, S - w + 1))
            x[start:start + w] = protos[m][cls] + 0.3 * rng.standard_normal((w, d))
            video[m] = x.astype(np.float32)
        feats[vid] = video
        turns = []
        for t in range(n_turns):
            q, a, _ = TEMPLATES[t % len(TEMPLATES)]
            turns.append({"question": q, "answer": a.format(**slots)})
        dialogs.append({
            "video_id": vid,
            "caption": f"a person is in the {slots['room']} .",
            "summary": f"they have a {slots['obj']} .",
            "dialog": turns,
        })
    if n_candidates > 1:
        pool = sorted({t["answer"] for d in dialogs for t in d["dialog"]})
        for d in dialogs:
            for turn in d["dialog"]:
                others = [a for a in pool if a != turn["answer"]]
                k = min(n_candidates - 1, len(others))
                picks = [others[j] for j in rng.choice(len(others), size=k, replace=False)]
                pos = int(rng.integers(0, k + 1))
                turn["candidates"] = picks[:pos] + [turn["answer"]] + picks[pos:]
                turn["gold_index"] = pos
    return {"dialogs": dialogs}, FeatureStore(feats)


def write_synth(out_dir: str | os.PathLike, seed: int, n_dialogues: int,
                grammar_size: int = 4, **kwargs) -> Path:
    """Write ``dialogs.json`` and ``features/<modality>/<video>.mtnf`` under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    obj, store = synth_corpus(seed, n_dialogues, grammar_size, **kwargs)
    (out / "dialogs.json").write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n",
                                      encoding="utf-8")
    store.save(out / "features")
    return out


def grounded_keyword(example: DialogueExample) -> tuple[int, str, str] | None:
    """(index into example.target, keyword, modality) for feature-grounded turns, else None."""
    q = " ".join(example.query)
    for question, answer, modality in TEMPLATES:
        if q == question and modality is not None:
            # answer templates end with the slot, target ends with <eos>
            return len(example.target) - 2, example.target[-2], modality
    return None
