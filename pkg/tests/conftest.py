import numpy as np
import pytest

from mtn.data import build_vocab, corpus_tokens, make_batches, parse_dialogs, synth_corpus
from mtn.model import ModelConfig, MtnModel

TINY_MODALITIES = [("audio", 8), ("visual", 16)]


def tiny_config(vocab_size, **kw):
    base = dict(n_layers=2, heads=2, d_model=32, d_ff=64, modalities=TINY_MODALITIES,
                vocab_size=vocab_size, dropout=0.0, max_history=3)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture(scope="session")
def small_corpus():
    obj, store = synth_corpus(3, 4)
    examples = parse_dialogs(obj, max_history=3)
    vocab = build_vocab(corpus_tokens(examples), 1)
    return examples, vocab, store


@pytest.fixture
def small_batch(small_corpus):
    examples, vocab, store = small_corpus
    return make_batches(examples[:6], 6, None, vocab, store, ["audio", "visual"])[0]


@pytest.fixture
def make_model(small_corpus):
    _, vocab, _ = small_corpus

    def factory(**kw):
        return MtnModel(tiny_config(len(vocab), **kw))

    return factory


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
