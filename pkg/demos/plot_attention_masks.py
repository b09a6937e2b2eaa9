"""
Attention, masks and heads
==========================

Scaled dot-product attention with a causal mask, and the check that splitting
into heads is the same as looping over per-head projections.
"""

import numpy as np

from mtn.attention import (MultiHeadParams, causal_mask, multi_head, positional_encoding,
                           scaled_dot_attention)
from mtn.numerics import Tensor

rng = np.random.default_rng(1)
np.set_printoptions(precision=3, suppress=True)

#%%
# With a causal mask, row i only spreads weight over positions 0..i.

q = k = v = Tensor(rng.standard_normal((5, 4)))
out, weights = scaled_dot_attention(q, k, v, causal_mask(5))
print(weights.data)

#%%
# Changing a future value leaves earlier outputs untouched.

v2 = v.data.copy()
v2[4] += 10.0
out2, _ = scaled_dot_attention(q, k, Tensor(v2), causal_mask(5))
print("max change in rows 0..3:", np.abs(out2.data[:4] - out.data[:4]).max())

#%%
# Two heads: column block i of each projection belongs to head i.

d, h = 8, 2
ws = [rng.standard_normal((d, d)) * 0.4 for _ in range(4)]
x, s = rng.standard_normal((3, d)), rng.standard_normal((6, d))
fused = multi_head(Tensor(x), Tensor(s), MultiHeadParams(*map(Tensor, ws), h)).data

heads = []
for i in range(h):
    cols = slice(i * d // h, (i + 1) * d // h)
    o, _ = scaled_dot_attention(Tensor(x @ ws[0][:, cols]), Tensor(s @ ws[1][:, cols]),
                                Tensor(s @ ws[2][:, cols]))
    heads.append(o.data)
looped = np.concatenate(heads, axis=-1) @ ws[3]
print("fused vs per-head loop:", np.abs(fused - looped).max())

#%%
# The sinusoid table: position 1, first column is sin(1).

pe = positional_encoding(50, 16)
print(pe[1, :4], np.sin(1.0))
