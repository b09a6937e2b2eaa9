"""Inference: greedy and beam-search generation, and candidate ranking by log-likelihood."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..data.batching import Batch, collate, pad_ids
from ..data.dataset import DialogueExample
from ..data.features import FeatureStore
from ..data.text import EOS_ID, PAD_ID, SOS_ID, Vocabulary
from ..model import Memory, MtnModel
from ..numerics.losses import token_log_probs
from ..numerics.tensor import no_grad

StepFn = Callable[[list[list[int]]], np.ndarray]


@dataclass
class BeamHypothesis:
    tokens: list[int]          # starts with <sos>
    logprob: float
    finished: bool = False

    def score(self, alpha: float) -> float:
        n = max(1, len(self.tokens) - 1)
        return self.logprob / n**alpha


def _log_softmax(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64)
    s = x - x.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def beam_search_core(step_fn: StepFn, beam_size: int, alpha: float, max_len: int,
                     sos: int = SOS_ID, eos: int = EOS_ID) -> BeamHypothesis:
    """Beam search over any next-token model.

    ``step_fn(prefixes)`` returns next-token log-probabilities, one row per prefix.
    Each step keeps the ``beam_size`` best expansions by cumulative log-probability;
    expansions ending in ``eos`` retire to the finished pool. Search stops once
    ``beam_size`` hypotheses have finished or ``max_len`` tokens were generated.
    Finished hypotheses are ranked by logprob / length**alpha.
    """
    if beam_size < 1 or max_len < 1:
        raise ValueError("beam_size and max_len must be >= 1")
    live = [BeamHypothesis([sos], 0.0)]
    done: list[BeamHypothesis] = []
    for _ in range(max_len):
        logp = step_fn([h.tokens for h in live])
        cands = []
        for h, row in zip(live, logp):
            for tok in np.argsort(-row, kind="stable")[:beam_size]:
                cands.append(BeamHypothesis(h.tokens + [int(tok)], h.logprob + float(row[tok])))
        cands.sort(key=lambda c: -c.logprob)  # stable: earlier beams win ties
        live = []
        for c in cands[:beam_size]:
            if c.tokens[-1] == eos:
                c.finished = True
                done.append(c)
            else:
                live.append(c)
        if not live or len(done) >= beam_size:
            break
    else:
        done += live  # hit max_len unfinished
    best = done[0]
    for h in done[1:]:
        if h.score(alpha) > best.score(alpha):
            best = h
    return best


def strip_special(tokens: Sequence[int]) -> list[int]:
    out = [t for t in tokens if t != SOS_ID]
    if EOS_ID in out:
        out = out[:out.index(EOS_ID)]
    return out


def _example_batch(model: MtnModel, example: DialogueExample, vocab: Vocabulary,
                   features: FeatureStore | None) -> Batch:
    return collate([example], vocab, features, model.cfg.modality_names)


def model_step_fn(model: MtnModel, memory: Memory) -> StepFn:
    """Next-token log-probabilities for a set of equal-length prefixes of one example."""
    def step(prefixes: list[list[int]]) -> np.ndarray:
        mem = memory.select(np.zeros(len(prefixes), dtype=np.int64))
        tgt = np.array(prefixes, dtype=np.int64)
        logits = model.decode(mem, tgt).data[:, -1, :]
        return _log_softmax(logits)
    return step


def greedy_decode(model: MtnModel, example: DialogueExample, vocab: Vocabulary,
                  features: FeatureStore | None = None, max_len: int = 30) -> list[int]:
    return beam_search(model, example, vocab, features, beam_size=1, max_len=max_len,
                       length_penalty_alpha=0.0)


def beam_search(model: MtnModel, example: DialogueExample, vocab: Vocabulary,
                features: FeatureStore | None = None, beam_size: int = 5,
                length_penalty_alpha: float = 1.0, max_len: int = 30) -> list[int]:
    """Best response ids (no <sos>/<eos>). Never scores below the greedy path."""
    hyp = beam_search_hypothesis(model, example, vocab, features, beam_size,
                                 length_penalty_alpha, max_len)
    return strip_special(hyp.tokens)


def beam_search_hypothesis(model, example, vocab, features=None, beam_size=5,
                           length_penalty_alpha=1.0, max_len=30) -> BeamHypothesis:
    model.eval()
    with no_grad():
        memory = model.encode(_example_batch(model, example, vocab, features))
        step = model_step_fn(model, memory)
        best = beam_search_core(step, beam_size, length_penalty_alpha, max_len)
        if beam_size > 1:
            greedy = beam_search_core(step, 1, length_penalty_alpha, max_len)
            if greedy.score(length_penalty_alpha) > best.score(length_penalty_alpha):
                best = greedy
    return best


def greedy_decode_batch(model: MtnModel, batch: Batch, max_len: int = 30) -> list[list[int]]:
    """Greedy decoding for a whole batch at once (same argmax rule as :func:`greedy_decode`)."""
    model.eval()
    B = len(batch)
    with no_grad():
        memory = model.encode(batch)
        seqs = np.full((B, 1), SOS_ID, dtype=np.int64)
        finished = np.zeros(B, dtype=bool)
        for _ in range(max_len):
            logits = model.decode(memory, seqs).data[:, -1, :]
            nxt = np.argmax(logits, axis=-1)
            nxt = np.where(finished, PAD_ID, nxt)
            seqs = np.concatenate([seqs, nxt[:, None]], axis=1)
            finished |= nxt == EOS_ID
            if finished.all():
                break
    return [strip_special([t for t in row if t != PAD_ID]) for row in seqs.tolist()]


def sequence_log_probs(model: MtnModel, example: DialogueExample, vocab: Vocabulary,
                       features: FeatureStore | None, candidates: Sequence[Sequence[int]]
                       ) -> list[tuple[float, int]]:
    """(sum of gold-token log-probs, token count) per candidate id list, teacher forced.

    Each candidate is scored as ``<sos> cand <eos>``; the count includes ``<eos>``.
    """
    model.eval()
    with no_grad():
        memory = model.encode(_example_batch(model, example, vocab, features))
        targets = [[SOS_ID] + list(c) + [EOS_ID] for c in candidates]
        tgt_in, in_len = pad_ids([t[:-1] for t in targets])
        labels, _ = pad_ids([t[1:] for t in targets])
        mem = memory.select(np.zeros(len(targets), dtype=np.int64))
        logits = model.decode(mem, tgt_in, in_len).data.astype(np.float64)
        lp = token_log_probs(logits, labels)
        keep = labels != PAD_ID
    return [(float(lp[i][keep[i]].sum()), int(keep[i].sum())) for i in range(len(targets))]


def rank_candidates(model: MtnModel, example: DialogueExample, candidates: Sequence[Sequence[str]],
                    vocab: Vocabulary, features: FeatureStore | None = None) -> list[int]:
    """Candidate indices sorted by length-normalised log-likelihood, best first; ties keep order."""
    if not candidates:
        raise ValueError("rank_candidates needs at least one candidate")
    ids = [tuple(vocab.encode(c)) for c in candidates]
    unique = list(dict.fromkeys(ids))
    scored = dict(zip(unique, sequence_log_probs(model, example, vocab, features, unique)))
    scores = [scored[c][0] / scored[c][1] for c in ids]
    return sorted(range(len(ids)), key=lambda i: (-scores[i], i))


def candidate_scores(model, example, candidates, vocab, features=None) -> list[float]:
    ids = [vocab.encode(c) for c in candidates]
    return [s / n for s, n in sequence_log_probs(model, example, vocab, features, ids)]
