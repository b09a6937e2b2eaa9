import itertools
import math

import numpy as np
import pytest
from scipy import stats

from mtn.data import make_batches
from mtn.data.text import EOS, SOS
from mtn.engine import (BeamHypothesis, TrainConfig, beam_search, beam_search_core,
                        beam_search_hypothesis, candidate_scores, compute_loss, crop_target,
                        greedy_decode, greedy_decode_batch, load_checkpoint, perplexity,
                        rank_candidates, save_checkpoint, sequence_log_probs, split_target,
                        train)
from mtn.engine.train import query_labels
from mtn.numerics import AdamState, NonFiniteError, ScheduleConfig, noam_lr, no_grad

MODS = ["audio", "visual"]


class FixedRng:
    """Stands in for a Generator: crop always fires at a chosen position."""

    def __init__(self, i):
        self.i = i

    def random(self):
        return 0.0

    def integers(self, lo, hi):
        assert lo <= self.i < hi
        return self.i


# -- cropping ------------------------------------------------------------------------------------

def test_crop_example_at_five():
    seq = [SOS, "there", "is", "just", "one", "person", EOS]
    assert crop_target(seq, 1.0, FixedRng(5)) == [SOS, "there", "is", "just", "one"]


def test_crop_probability_zero_and_short_targets():
    rng = np.random.default_rng(0)
    seq = list(range(8))
    assert all(crop_target(seq, 0.0, rng) == seq for _ in range(100))
    for L in (2, 3):
        assert crop_target(list(range(L)), 1.0, rng) == list(range(L))


def test_crop_positions_uniform():
    rng = np.random.default_rng(123)
    seq = list(range(10))
    lengths = [len(crop_target(seq, 1.0, rng)) for _ in range(10_000)]
    counts = np.bincount(lengths, minlength=10)
    assert counts[:2].sum() == 0 and counts[10:].sum() == 0
    assert stats.chisquare(counts[2:10]).pvalue > 0.01


def test_crop_keeps_sos_and_drops_eos():
    rng = np.random.default_rng(5)
    seq = [1, 7, 8, 9, 10, 2]
    for _ in range(200):
        c = crop_target(seq, 1.0, rng)
        assert c[0] == 1 and 2 not in c and c == seq[:len(c)]


def test_crop_rate_matches_p():
    rng = np.random.default_rng(6)
    seq = list(range(12))
    fired = sum(len(crop_target(seq, 0.3, rng)) < 12 for _ in range(4000))
    assert abs(fired / 4000 - 0.3) < 0.03


def test_split_target_offsets_by_one():
    tgt_in, in_len, labels = split_target([[1, 5, 6, 2], [1, 7, 2]])
    np.testing.assert_array_equal(tgt_in, [[1, 5, 6], [1, 7, 0]])
    np.testing.assert_array_equal(labels, [[5, 6, 2], [7, 2, 0]])
    np.testing.assert_array_equal(in_len, [3, 2])


# -- loss ------------------------------------------------------------------------------------------

def test_loss_components_by_variant(make_model, small_batch):
    _, comps = compute_loss(small_batch, make_model(variant="no_qae"))
    assert set(comps) == {"response"}
    loss, comps = compute_loss(small_batch, make_model())
    assert set(comps) == {"response", "query"}
    assert np.isfinite(loss.data) and loss.data > 0


def test_empty_batch_is_an_error(make_model, small_batch):
    empty = type(small_batch)(**{**small_batch.__dict__, "examples": []})
    with pytest.raises(ValueError, match="empty"):
        compute_loss(empty, make_model())


def smoothed_ce(logits, labels, eps, pad=0):
    """Independent per-token loop: smoothed CE averaged over non-pad labels."""
    V = logits.shape[-1]
    total, n = 0.0, 0
    for row, y in zip(logits.reshape(-1, V), labels.reshape(-1)):
        if y == pad:
            continue
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        q = [0.0 if k == pad else eps / (V - 1) for k in range(V)]
        q[y] += 1 - eps
        total += -sum(qk * (row[k] - lse) for k, qk in enumerate(q))
        n += 1
    return total / n


def test_loss_matches_hand_assembled_sum(small_corpus, make_model):
    examples, vocab, store = small_corpus
    b = make_batches(examples[3:4], 1, None, vocab, store, MODS)[0]
    m = make_model(dtype="float64")
    loss, comps = compute_loss(b, m, eps_ls=0.1)
    tgt_in, in_len, labels = split_target(b.target_lists())
    logits, q_logits = m(b, tgt_in, in_len)
    expect_t = smoothed_ce(logits.data.astype(float), labels, 0.1)
    expect_q = smoothed_ce(q_logits.data.astype(float), query_labels(b, False), 0.1)
    assert comps["response"] == pytest.approx(expect_t, abs=1e-10)
    assert comps["query"] == pytest.approx(expect_q, abs=1e-10)
    assert float(loss.data) == pytest.approx(expect_t + expect_q, abs=1e-10)


def test_query_stream_never_cropped(make_model, small_batch):
    m = make_model()
    rng = np.random.default_rng(0)
    _, a = compute_loss(small_batch, m, 0.1, p=1.0, rng=rng)
    _, b = compute_loss(small_batch, m, 0.1, p=0.0)
    assert a["query"] == pytest.approx(b["query"], abs=1e-6)
    assert a["response"] != pytest.approx(b["response"], abs=1e-6)


# -- training -------------------------------------------------------------------------------------

def tiny_train(examples, vocab, store, model, **kw):
    cfg = TrainConfig(**{**dict(epochs=1000, max_steps=5, warmup_steps=50, batch_size=8, seed=0),
                         **kw})
    return train(examples, store, cfg, model, vocab)


def test_loss_decreases_on_fixed_batch(small_corpus, make_model):
    examples, vocab, store = small_corpus
    res = tiny_train(examples[:6], vocab, store, make_model(), max_steps=50,
                     sim_probability=0.0, warmup_steps=20)
    losses = [r["loss"] for r in res.log]
    windows = [np.mean(losses[i:i + 10]) for i in range(0, 50, 10)]
    assert all(a > b for a, b in zip(windows, windows[1:]))


def test_training_is_deterministic(small_corpus, make_model):
    examples, vocab, store = small_corpus
    a = tiny_train(examples, vocab, store, make_model(dropout=0.1))
    b = tiny_train(examples, vocab, store, make_model(dropout=0.1))
    assert [r["loss"] for r in a.log] == [r["loss"] for r in b.log]


def test_applied_learning_rate_is_schedule(small_corpus, make_model):
    examples, vocab, store = small_corpus
    res = tiny_train(examples, vocab, store, make_model(), max_steps=8, warmup_steps=4)
    sched = ScheduleConfig(32, 4)
    assert [r["lr"] for r in res.log] == [noam_lr(s, sched) for s in range(1, 9)]
    assert res.optimizer.state.step_count == 8


def test_checkpoint_reloads_recorded_perplexity(small_corpus, make_model, tmp_path):
    examples, vocab, store = small_corpus
    res = tiny_train(examples, vocab, store, make_model(), max_steps=6, validate_every=3,
                     checkpoint_dir=str(tmp_path))
    assert [v["step"] for v in res.validations] == [3, 6]
    batches = make_batches(examples, 8, None, vocab, store, MODS)
    for v in res.validations:
        ck = load_checkpoint(tmp_path / v["checkpoint"])
        assert ck.step == v["step"]
        assert perplexity(ck.model, batches) == v["val_ppl"]
    best = min(res.validations, key=lambda v: (v["val_ppl"], -v["step"]))
    assert res.best == best


def test_nan_loss_aborts_with_step(small_corpus, make_model):
    examples, vocab, store = small_corpus
    m = make_model()
    m.out_head.bias.data[:] = np.nan
    with pytest.raises(NonFiniteError, match="step 1"):
        tiny_train(examples, vocab, store, m)


def test_vocab_mismatch_rejected(small_corpus):
    examples, vocab, store = small_corpus
    from tests.conftest import tiny_config
    from mtn.model import MtnModel
    with pytest.raises(ValueError, match="vocab"):
        tiny_train(examples, vocab, store, MtnModel(tiny_config(len(vocab) + 1)))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(sim_probability=1.5).validate()
    with pytest.raises(ValueError):
        TrainConfig(epochs=0).validate()


# -- checkpoints -------------------------------------------------------------------------------------

def test_checkpoint_roundtrip_is_exact(small_corpus, make_model, small_batch, tmp_path):
    _, vocab, _ = small_corpus
    m = make_model(variant="qe", seed=3)
    adam = AdamState.for_params(dict(m.named_parameters()))
    adam.step_count = 4
    save_checkpoint(tmp_path / "a", m, vocab, 17, adam, {"note": "x"})
    ck = load_checkpoint(tmp_path / "a")
    assert ck.vocab == vocab and ck.step == 17 and ck.extra == {"note": "x"}
    assert ck.adam.step_count == 4
    save_checkpoint(tmp_path / "b", ck.model, ck.vocab, 17, ck.adam, {"note": "x"})
    for f in ("manifest.json", "params.bin"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    tgt_in, in_len, _ = split_target(small_batch.target_lists())
    with no_grad():
        a = m.eval()(small_batch, tgt_in, in_len)[0].data
        b = ck.model(small_batch, tgt_in, in_len)[0].data
    assert a.tobytes() == b.tobytes()


def test_checkpoint_errors(small_corpus, make_model, tmp_path):
    from mtn.engine import CheckpointError
    _, vocab, _ = small_corpus
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing")
    save_checkpoint(tmp_path / "c", make_model(), vocab)
    blob = (tmp_path / "c" / "params.bin").read_bytes()
    (tmp_path / "c" / "params.bin").write_bytes(blob[:-8])
    with pytest.raises(CheckpointError, match="past end"):
        load_checkpoint(tmp_path / "c")


# -- beam search -----------------------------------------------------------------------------------

SOS_TOY, EOS_TOY = 99, 0   # toy vocabulary: 0 = <eos>, 1 = a, 2 = b


def toy_step_fn(seed):
    rng = np.random.default_rng(seed)
    table = {}

    def logp(prefix):
        key = tuple(prefix)
        if key not in table:
            z = rng.standard_normal(3) * 1.5
            table[key] = z - np.log(np.exp(z).sum())
        return table[key]

    def step(prefixes):
        return np.stack([logp(p) for p in prefixes])

    return step, logp


def exhaustive_best(logp, alpha, max_len):
    best, best_score = None, -np.inf
    for n in range(1, max_len + 1):
        for seq in itertools.product(range(3), repeat=n):
            if EOS_TOY in seq[:-1]:
                continue
            if seq[-1] != EOS_TOY and n < max_len:
                continue
            toks = [SOS_TOY] + list(seq)
            lp = sum(logp(toks[:i + 1])[toks[i + 1]] for i in range(n))
            s = lp / n**alpha
            if s > best_score:
                best, best_score = toks, s
    return best


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("alpha", [0.0, 1.0, 2.0])
def test_beam_matches_exhaustive_enumeration(seed, alpha):
    step, logp = toy_step_fn(seed)
    ref = exhaustive_best(logp, alpha, 3)
    hyp = beam_search_core(step, beam_size=9, alpha=alpha, max_len=3, sos=SOS_TOY, eos=EOS_TOY)
    assert hyp.tokens == ref


def test_beam_logprob_non_increasing_and_finished_end_in_eos():
    step, logp = toy_step_fn(1)
    hyp = beam_search_core(step, 3, 1.0, 6, sos=SOS_TOY, eos=EOS_TOY)
    partial = [sum(logp(hyp.tokens[:i + 1])[hyp.tokens[i + 1]] for i in range(k))
               for k in range(len(hyp.tokens))]
    assert all(a >= b for a, b in zip(partial, partial[1:]))
    assert hyp.logprob == pytest.approx(partial[-1])
    assert hyp.tokens[-1] == EOS_TOY or len(hyp.tokens) == 7


def test_alpha_zero_is_plain_logprob():
    h1, h2 = BeamHypothesis([1, 5, 2], -1.0), BeamHypothesis([1, 5, 6, 7, 2], -1.2)
    assert h1.score(0.0) > h2.score(0.0)
    assert h1.score(1.0) < h2.score(1.0)


def test_beam_rejects_bad_sizes():
    step, _ = toy_step_fn(0)
    with pytest.raises(ValueError):
        beam_search_core(step, 0, 1.0, 3)


def test_beam_one_equals_greedy(small_corpus, make_model, small_batch):
    examples, vocab, store = small_corpus
    m = make_model(seed=2)
    batch_out = greedy_decode_batch(m, small_batch, 12)
    for ex, g in zip(small_batch.examples, batch_out):
        assert beam_search(m, ex, vocab, store, beam_size=1, max_len=12) == g
        assert greedy_decode(m, ex, vocab, store, 12) == g


def test_beam_never_scores_below_greedy(small_corpus, make_model):
    examples, vocab, store = small_corpus
    m = make_model(seed=6)
    for ex in examples[:5]:
        for alpha in (0.0, 1.0):
            b = beam_search_hypothesis(m, ex, vocab, store, 3, alpha, 10)
            g = beam_search_hypothesis(m, ex, vocab, store, 1, alpha, 10)
            assert b.score(alpha) >= g.score(alpha)


# -- ranking ---------------------------------------------------------------------------------------

def test_teacher_forcing_consistency(small_corpus, make_model):
    examples, vocab, store = small_corpus
    m = make_model(variant="no_qae", dtype="float64").eval()
    ex = examples[7]
    [(lp, n)] = sequence_log_probs(m, ex, vocab, store, [vocab.encode(ex.answer)])
    b = make_batches([ex], 1, None, vocab, store, MODS)[0]
    with no_grad():
        _, comps = compute_loss(b, m, eps_ls=0.0)
    assert n == len(ex.target) - 1
    assert -lp / n == pytest.approx(comps["response"], abs=1e-10)


def test_rank_single_and_duplicates(small_corpus, make_model):
    examples, vocab, store = small_corpus
    m = make_model(seed=1)
    ex = examples[2]
    assert rank_candidates(m, ex, [["hello"]], vocab, store) == [0]
    cands = [ex.answer, ["the", "person"], ex.answer, ["i", "can", "hear"]]
    scores = candidate_scores(m, ex, cands, vocab, store)
    assert scores[0] == scores[2]
    order = rank_candidates(m, ex, cands, vocab, store)
    assert order.index(0) < order.index(2)
    assert order == sorted(range(4), key=lambda i: (-scores[i], i))
    with pytest.raises(ValueError):
        rank_candidates(m, ex, [], vocab, store)
