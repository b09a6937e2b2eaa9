import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtn.attention import (MASK_FILL, AttentionBlock, MultiHeadAttention, MultiHeadParams,
                           causal_mask, feed_forward, multi_head, positional_encoding,
                           scaled_dot_attention, sublayer)
from mtn.numerics import LayerNorm, ShapeError, Tensor, check_gradients, sum_


def T(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def per_head_oracle(x, s, wq, wk, wv, wo, h, mask=None):
    """Loop over heads explicitly, with exp-normalise attention."""
    d = wq.shape[0]
    dk = d // h
    heads = []
    for i in range(h):
        cols = slice(i * dk, (i + 1) * dk)
        q, k, v = x @ wq[:, cols], s @ wk[:, cols], s @ wv[:, cols]
        scores = q @ k.T / math.sqrt(dk)
        if mask is not None:
            scores = np.where(mask, scores, -np.inf)
        w = np.exp(scores - scores.max(axis=-1, keepdims=True))
        w /= w.sum(axis=-1, keepdims=True)
        heads.append(w @ v)
    return np.concatenate(heads, axis=-1) @ wo


def test_single_key_returns_its_value():
    rng = np.random.default_rng(0)
    q, k, v = rng.standard_normal((3, 4)), rng.standard_normal((1, 4)), rng.standard_normal((1, 5))
    out, w = scaled_dot_attention(T(q), T(k), T(v))
    np.testing.assert_allclose(out.data, np.repeat(v, 3, axis=0), atol=1e-15)
    np.testing.assert_allclose(w.data, 1.0)


def test_identical_keys_give_uniform_weights():
    rng = np.random.default_rng(1)
    k = np.repeat(rng.standard_normal((1, 4)), 5, axis=0)
    v = rng.standard_normal((5, 3))
    out, w = scaled_dot_attention(T(rng.standard_normal((2, 4))), T(k), T(v))
    np.testing.assert_allclose(w.data, 0.2, atol=1e-15)
    np.testing.assert_allclose(out.data, np.repeat(v.mean(0, keepdims=True), 2, 0), atol=1e-14)


def test_masked_keys_get_negligible_weight():
    rng = np.random.default_rng(2)
    q, k, v = (T(rng.standard_normal((4, 6))) for _ in range(3))
    mask = np.array([True, False, True, False])[None, :].repeat(4, 0)
    _, w = scaled_dot_attention(q, k, v, mask)
    assert np.all(w.data[:, [1, 3]] < 1e-9)
    np.testing.assert_allclose(w.data.sum(-1), 1.0)


def test_fully_masked_row_is_an_error():
    q = T(np.ones((2, 3)))
    with pytest.raises(ValueError, match="no attendable key"):
        scaled_dot_attention(q, q, q, np.array([[True, True], [False, False]]))


def test_mask_fill_value():
    assert MASK_FILL == -1e9


def test_shape_errors():
    with pytest.raises(ShapeError):
        scaled_dot_attention(T(np.ones((2, 3))), T(np.ones((2, 4))), T(np.ones((2, 4))))
    with pytest.raises(ShapeError):
        scaled_dot_attention(T(np.ones((2, 3))), T(np.ones((2, 3))), T(np.ones((3, 4))))


def test_single_head_identity_projections_reduce_to_attention():
    rng = np.random.default_rng(3)
    x, s = rng.standard_normal((3, 4)), rng.standard_normal((5, 4))
    eye = T(np.eye(4))
    out = multi_head(T(x), T(s), MultiHeadParams(eye, eye, eye, eye, 1))
    ref, _ = scaled_dot_attention(T(x), T(s), T(s))
    np.testing.assert_allclose(out.data, ref.data, atol=1e-15)


@pytest.mark.parametrize("h", [1, 2, 4])
def test_multi_head_matches_per_head_loop(h):
    rng = np.random.default_rng(10 + h)
    d = 8
    x, s = rng.standard_normal((4, d)), rng.standard_normal((6, d))
    ws = [rng.standard_normal((d, d)) * 0.5 for _ in range(4)]
    mask = rng.random((4, 6)) < 0.7
    mask[:, 0] = True
    out = multi_head(T(x), T(s), MultiHeadParams(*(T(w) for w in ws), h), mask)
    np.testing.assert_allclose(out.data, per_head_oracle(x, s, *ws, h, mask), rtol=0, atol=1e-12)


def test_multi_head_rejects_bad_head_count():
    w = T(np.eye(6))
    with pytest.raises(ValueError, match="divide"):
        MultiHeadParams(w, w, w, w, 4)


def test_multi_head_gradient():
    rng = np.random.default_rng(4)
    mha = MultiHeadAttention(8, 2, rng, dtype=np.float64)
    x, s = T(rng.standard_normal((2, 3, 8)), True), T(rng.standard_normal((2, 5, 8)), True)
    mask = np.ones((2, 1, 5), dtype=bool)
    mask[1, 0, 3:] = False
    w = rng.standard_normal((2, 3, 8))
    tensors = [x, s, mha.wq, mha.wk, mha.wv, mha.wo]
    assert max(check_gradients(lambda: sum_(mha(x, s, mask) * w), tensors)) < 1e-4


# -- positional encoding --------------------------------------------------------------

def test_positional_encoding_values():
    pe = positional_encoding(10, 4)
    np.testing.assert_array_equal(pe[0], [0, 1, 0, 1])
    assert pe[1, 0] == pytest.approx(math.sin(1.0), abs=1e-15)
    assert pe[1, 1] == pytest.approx(math.cos(1.0), abs=1e-15)
    assert pe[3, 2] == pytest.approx(math.sin(3 / 100.0), abs=1e-15)
    assert np.all(np.abs(pe) <= 1.0)


def test_positional_encoding_is_readonly_and_rejects_odd_width():
    pe = positional_encoding(5, 6)
    with pytest.raises(ValueError):
        pe[0, 0] = 3.0
    with pytest.raises(ValueError, match="even"):
        positional_encoding(5, 7)


def test_positional_encoding_rows_distinct():
    pe = positional_encoding(64, 16)
    assert len({tuple(np.round(r, 12)) for r in pe}) == 64


# -- feed-forward / sub-layers --------------------------------------------------------------

def test_feed_forward_hand_computed():
    x = T([[1.0, -2.0]])
    w1 = T([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    b1 = T([0.0, 0.0, 0.5])
    w2 = T([[1.0], [2.0], [3.0]])
    b2 = T([0.25])
    # hidden = relu([1, -2, -0.5]) = [1, 0, 0]; out = 1 + 0.25
    np.testing.assert_allclose(feed_forward(x, w1, b1, w2, b2).data, [[1.25]])


def test_feed_forward_is_position_wise():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((7, 4))
    params = [T(rng.standard_normal(s)) for s in [(4, 6), (6,), (6, 4), (4,)]]
    perm = rng.permutation(7)
    a = feed_forward(T(x), *params).data
    b = feed_forward(T(x[perm]), *params).data
    np.testing.assert_allclose(a[perm], b, atol=1e-14)


def test_feed_forward_gradient():
    rng = np.random.default_rng(6)
    x = T(rng.standard_normal((3, 4)), True)
    params = [T(rng.standard_normal(s), True) for s in [(4, 6), (6,), (6, 4), (4,)]]

    def loss():
        y = feed_forward(x, *params)
        return sum_(y * y)

    err = check_gradients(loss, [x, *params])
    assert max(err) < 1e-5


def test_sublayer_rejects_width_change():
    x = T(np.ones((2, 4)))
    with pytest.raises(ShapeError):
        sublayer(x, lambda t: T(np.ones((2, 3))), LayerNorm(4, dtype=np.float64))


def test_attention_block_output_is_normalised():
    rng = np.random.default_rng(7)
    blk = AttentionBlock(8, 2, 16, 0.0, rng, np.float64)
    out = blk(T(rng.standard_normal((2, 5, 8)))).data
    np.testing.assert_allclose(out.mean(-1), 0.0, atol=1e-10)


# -- causal mask -----------------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40))
def test_causal_mask_invariants(L):
    m = causal_mask(L)
    assert m.shape == (L, L)
    assert np.all(np.diag(m))
    assert not np.any(np.triu(m, 1))
    assert np.all(m.sum(-1) == np.arange(1, L + 1))


def test_causal_attention_ignores_future_values():
    rng = np.random.default_rng(8)
    q, k, v = (rng.standard_normal((6, 4)) for _ in range(3))
    out1, _ = scaled_dot_attention(T(q), T(k), T(v), causal_mask(6))
    v2, k2 = v.copy(), k.copy()
    v2[4:] += 100.0
    k2[4:] -= 7.0
    out2, _ = scaled_dot_attention(T(q), T(k2), T(v2), causal_mask(6))
    np.testing.assert_allclose(out1.data[:4], out2.data[:4], atol=1e-12)
    assert not np.allclose(out1.data[4:], out2.data[4:])


def test_causal_mask_rejects_empty():
    with pytest.raises(ValueError):
        causal_mask(0)
