"""Transformer building blocks: attention, positional encoding, feed-forward, post-norm wrapper."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .numerics import nn
from .numerics.tensor import (ShapeError, Tensor, add, as_tensor, dropout, linear, matmul,
                              mul, relu, reshape, softmax, transpose)

MASK_FILL = -1e9


def causal_mask(L: int) -> np.ndarray:
    """Lower-triangular boolean mask: position i may attend j iff j <= i."""
    if L < 1:
        raise ValueError("causal_mask needs L >= 1")
    return np.tril(np.ones((L, L), dtype=bool))


@lru_cache(maxsize=32)
def _pe_table(max_len: int, d: int) -> np.ndarray:
    pos = np.arange(max_len, dtype=np.float64)[:, None]
    i2 = np.arange(0, d, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i2 / d)
    table = np.empty((max_len, d), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    table.setflags(write=False)
    return table


def positional_encoding(max_len: int, d: int) -> np.ndarray:
    """Sinusoid table with PE[pos, 2i] = sin(pos / 10000^(2i/d)) and the cosine at 2i+1."""
    if d % 2:
        raise ValueError(f"positional encoding needs an even width, got d={d}")
    return _pe_table(max_len, d)


def _mask_bias(mask: np.ndarray, dtype) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ValueError("attention mask has a query row with no attendable key")
    return np.where(mask, 0.0, MASK_FILL).astype(dtype)


def scaled_dot_attention(q, k, v, mask: np.ndarray | None = None, *, dropout_p: float = 0.0,
                         rng: np.random.Generator | None = None, training: bool = False):
    """softmax(q k^T / sqrt(d_k)) v over the last two axes.

    ``mask`` is boolean and broadcastable to (..., L_q, L_k); True marks an
    attendable key. Returns ``(output, weights)``.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    d_k = q.shape[-1]
    if k.shape[-1] != d_k:
        raise ShapeError(f"query width {d_k} != key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"{k.shape[-2]} keys but {v.shape[-2]} values")
    scores = mul(matmul(q, k.swapaxes(-1, -2)), 1.0 / np.sqrt(d_k))
    if mask is not None:
        scores = add(scores, _mask_bias(mask, scores.dtype))
    weights = softmax(scores, axis=-1)
    attended = dropout(weights, dropout_p, rng, training)
    return matmul(attended, v), weights


@dataclass
class MultiHeadParams:
    """Per-head projections stored side by side: column block i of ``wq`` is W^Q_i."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    heads: int

    def __post_init__(self):
        d = self.wq.shape[0]
        if d % self.heads:
            raise ValueError(f"{self.heads} heads do not divide width {d}")


def _split_heads(x: Tensor, h: int) -> Tensor:
    *lead, L, d = x.shape
    x = reshape(x, tuple(lead) + (L, h, d // h))
    axes = list(range(len(lead))) + [len(lead) + 1, len(lead), len(lead) + 2]
    return transpose(x, axes)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, L, dk = x.shape
    axes = list(range(len(lead))) + [len(lead) + 1, len(lead), len(lead) + 2]
    return reshape(transpose(x, axes), tuple(lead) + (L, h * dk))


def multi_head(query_in, kv_in, params: MultiHeadParams, mask: np.ndarray | None = None, *,
               dropout_p: float = 0.0, rng=None, training: bool = False,
               return_weights: bool = False):
    """Concat(head_1..head_h) W^O with head_i = Attn(x W^Q_i, s W^K_i, s W^V_i)."""
    query_in, kv_in = as_tensor(query_in), as_tensor(kv_in)
    d = params.wq.shape[0]
    if query_in.shape[-1] != d or kv_in.shape[-1] != d:
        raise ShapeError(f"multi_head expects width {d}, got {query_in.shape} and {kv_in.shape}")
    h = params.heads
    q = _split_heads(linear(query_in, params.wq), h)
    k = _split_heads(linear(kv_in, params.wk), h)
    v = _split_heads(linear(kv_in, params.wv), h)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        # broadcast the same mask to every head
        mask = np.expand_dims(mask, -3)
    out, weights = scaled_dot_attention(q, k, v, mask, dropout_p=dropout_p, rng=rng,
                                        training=training)
    out = linear(_merge_heads(out), params.wo)
    return (out, weights) if return_weights else out


def feed_forward(x, w1, b1, w2, b2) -> Tensor:
    """Position-wise W2 relu(W1 x + b1) + b2."""
    return linear(relu(linear(as_tensor(x), w1, b1)), w2, b2)


def sublayer(x: Tensor, inner: Callable[[Tensor], Tensor], norm: nn.LayerNorm,
             drop: nn.Dropout | None = None) -> Tensor:
    """Post-norm residual wrapper: layer_norm(x + dropout(inner(x)))."""
    y = inner(x)
    if y.shape[-1] != x.shape[-1]:
        raise ShapeError(f"sub-layer changed width {x.shape[-1]} -> {y.shape[-1]}")
    if drop is not None:
        y = drop(y)
    return norm(add(x, y))


class MultiHeadAttention(nn.Module):
    def __init__(self, d: int, heads: int, rng: np.random.Generator, dropout_p: float = 0.0,
                 dtype=np.float32):
        super().__init__()
        if d % heads:
            raise ValueError(f"{heads} heads do not divide width {d}")
        self.heads = heads
        self.wq = nn.parameter(nn.xavier_uniform(rng, d, d, dtype))
        self.wk = nn.parameter(nn.xavier_uniform(rng, d, d, dtype))
        self.wv = nn.parameter(nn.xavier_uniform(rng, d, d, dtype))
        self.wo = nn.parameter(nn.xavier_uniform(rng, d, d, dtype))
        self.dropout_p = dropout_p
        self.rng = rng

    @property
    def params(self) -> MultiHeadParams:
        return MultiHeadParams(self.wq, self.wk, self.wv, self.wo, self.heads)

    def forward(self, query_in: Tensor, kv_in: Tensor, mask: np.ndarray | None = None) -> Tensor:
        return multi_head(query_in, kv_in, self.params, mask, dropout_p=self.dropout_p,
                          rng=self.rng, training=self.training)


class FeedForward(nn.Module):
    def __init__(self, d: int, d_ff: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.w1 = nn.Linear(d, d_ff, rng, dtype=dtype)
        self.w2 = nn.Linear(d_ff, d, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return feed_forward(x, self.w1.weight, self.w1.bias, self.w2.weight, self.w2.bias)


class AttentionBlock(nn.Module):
    """One attention sub-layer: attention then feed-forward, each in a post-norm residual."""

    def __init__(self, d: int, heads: int, d_ff: int, dropout_p: float, rng: np.random.Generator,
                 dtype=np.float32):
        super().__init__()
        self.attn = MultiHeadAttention(d, heads, rng, dropout_p, dtype)
        self.norm1 = nn.LayerNorm(d, dtype=dtype)
        self.ffn = FeedForward(d, d_ff, rng, dtype)
        self.norm2 = nn.LayerNorm(d, dtype=dtype)
        self.drop = nn.Dropout(dropout_p, rng)

    def forward(self, x: Tensor, source: Tensor | None = None,
                mask: np.ndarray | None = None) -> Tensor:
        src = x if source is None else source
        x = sublayer(x, lambda t: self.attn(t, src, mask), self.norm1, self.drop)
        return sublayer(x, self.ffn, self.norm2, self.drop)
