"""Corpus BLEU-1..4, ROUGE-L and CIDEr-D with one reference per hypothesis."""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .data.text import tokenize

Pair = tuple[Sequence[str], Sequence[str]]  # (hypothesis tokens, reference tokens)

ROUGE_BETA = 1.2
CIDER_SIGMA = 6.0
CIDER_N = 4


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(pairs: Sequence[Pair], n: int = 4) -> float:
    """Corpus BLEU: clipped n-gram precisions for orders 1..n, geometric mean, brevity penalty."""
    if not pairs:
        raise ValueError("bleu on an empty corpus")
    if n not in (1, 2, 3, 4):
        raise ValueError(f"BLEU order must be 1..4, got {n}")
    matched = [0] * n
    total = [0] * n
    hyp_len = ref_len = 0
    for hyp, ref in pairs:
        hyp_len += len(hyp)
        ref_len += len(ref)
        for k in range(1, n + 1):
            h, r = ngrams(hyp, k), ngrams(ref, k)
            matched[k - 1] += sum(min(c, r[g]) for g, c in h.items())
            total[k - 1] += sum(h.values())
    if hyp_len == 0 or any(m == 0 for m in matched):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matched, total)) / n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_p)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l_pair(hyp: Sequence[str], ref: Sequence[str], beta: float = ROUGE_BETA) -> float:
    if not hyp or not ref:
        return 0.0
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return (1 + beta**2) * p * r / (r + beta**2 * p)


def rouge_l(pairs: Sequence[Pair], beta: float = ROUGE_BETA) -> float:
    """Mean per-pair LCS F-measure."""
    if not pairs:
        raise ValueError("rouge_l on an empty corpus")
    return sum(rouge_l_pair(h, r, beta) for h, r in pairs) / len(pairs)


def _tfidf(counts: Counter, df: Counter, log_n: float):
    vec = {g: c * (log_n - math.log(max(1.0, df[g]))) for g, c in counts.items()}
    return vec, math.sqrt(sum(v * v for v in vec.values()))


def cider(pairs: Sequence[Pair], sigma: float = CIDER_SIGMA, n: int = CIDER_N) -> float:
    """CIDEr-D: clipped TF-IDF cosine per order with a Gaussian length penalty, x10."""
    if not pairs:
        raise ValueError("cider on an empty corpus")
    df: Counter = Counter()
    for _, ref in pairs:
        for k in range(1, n + 1):
            df.update(ngrams(ref, k).keys())
    log_n = math.log(float(len(pairs)))
    total = 0.0
    for hyp, ref in pairs:
        penalty = math.exp(-((len(hyp) - len(ref)) ** 2) / (2 * sigma**2))
        per_order = 0.0
        for k in range(1, n + 1):
            vh, nh = _tfidf(ngrams(hyp, k), df, log_n)
            vr, nr = _tfidf(ngrams(ref, k), df, log_n)
            if nh == 0.0 or nr == 0.0:
                continue
            dot = sum(min(v, vr.get(g, 0.0)) * vr.get(g, 0.0) for g, v in vh.items())
            per_order += dot / (nh * nr) * penalty
        total += per_order / n * 10.0
    return total / len(pairs)


@dataclass
class MetricReport:
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    rouge_l: float
    cider: float
    count: int

    def to_json(self) -> str:
        return json.dumps({k: getattr(self, k) for k in
                           ("bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "cider", "count")})


def score_corpus(pairs: Sequence[Pair]) -> MetricReport:
    return MetricReport(*(bleu(pairs, k) for k in (1, 2, 3, 4)), rouge_l(pairs), cider(pairs),
                        len(pairs))


class AlignmentError(ValueError):
    pass


def _read_jsonl(path) -> dict[tuple, str]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            key = (rec["dialogue_id"], rec["turn"])
            if key in out:
                raise AlignmentError(f"{path}:{lineno}: duplicate entry {key}")
            out[key] = rec["response"]
    return out


def evaluate(hyp_file: str | os.PathLike, ref_file: str | os.PathLike,
             report_file: str | os.PathLike | None = None) -> MetricReport:
    """Score generation JSON lines against references aligned on (dialogue_id, turn)."""
    hyps, refs = _read_jsonl(hyp_file), _read_jsonl(ref_file)
    orphans = sorted(set(hyps) ^ set(refs), key=str)
    if orphans:
        raise AlignmentError(f"unmatched (dialogue_id, turn) entries: {orphans}")
    keys = sorted(refs, key=lambda k: (str(k[0]), k[1]))
    report = score_corpus([(tokenize(hyps[k]), tokenize(refs[k])) for k in keys])
    if report_file is not None:
        Path(report_file).write_text(report.to_json() + "\n", encoding="utf-8")
    return report
