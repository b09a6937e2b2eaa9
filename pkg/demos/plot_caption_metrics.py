"""
Scoring generated responses
===========================

Corpus BLEU-1..4, ROUGE-L and CIDEr-D against one reference per example.
"""

from mtn.data import tokenize
from mtn.metrics import bleu, cider, rouge_l, rouge_l_pair, score_corpus

corpus = [
    ("A man is walking into the kitchen.", "A man walks into the kitchen."),
    ("He picks up a cup.", "He picks up a blue cup from the table."),
    ("No.", "No, there is nobody else."),
]
pairs = [(tokenize(h), tokenize(r)) for h, r in corpus]

#%%
# One report with every metric.

print(score_corpus(pairs).to_json())

#%%
# BLEU averages clipped n-gram precisions geometrically, so a corpus can
# score well on unigrams and poorly on 4-grams.

for n in (1, 2, 3, 4):
    print(f"BLEU-{n} {bleu(pairs, n):.4f}")

#%%
# ROUGE-L is an LCS F-measure weighted towards recall (beta = 1.2).

print(rouge_l_pair(["the", "cat"], ["the", "black", "cat"]))
print(rouge_l(pairs))

#%%
# CIDEr-D weights n-grams by how rare they are among the references; an
# n-gram that every reference contains carries no weight.

print(cider(pairs))
print(cider([(["a", "b"], ["a", "b"]), (["a", "b"], ["a", "b"])]))
