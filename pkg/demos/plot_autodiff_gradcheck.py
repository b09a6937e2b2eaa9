"""
Reverse-mode autodiff on numpy
==============================

Build a small graph, backpropagate through it, and compare every gradient
with central finite differences.
"""

import numpy as np

from mtn.numerics import (Tensor, check_gradients, label_smoothed_nll, layer_norm, linear,
                          softmax, sum_)

#%%
# A tensor that asks for gradients records how it was made. ``backward`` on a
# scalar walks that record in reverse.

x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
loss = sum_(x * x) * 0.5
loss.backward()
print("d(0.5 |x|^2)/dx =", x.grad)          # equals x

#%%
# Softmax of [0, ln 3] puts a quarter of the mass on the first entry.

print(softmax(Tensor(np.array([0.0, np.log(3.0)]))).data)

#%%
# A one-layer classifier with layer norm and the label-smoothed loss used for
# training. Double precision keeps finite differences honest.

rng = np.random.default_rng(0)
h = Tensor(rng.standard_normal((2, 5, 8)), requires_grad=True)
g = Tensor(np.ones(8), requires_grad=True)
b = Tensor(np.zeros(8), requires_grad=True)
w = Tensor(rng.standard_normal((8, 11)) * 0.3, requires_grad=True)
targets = rng.integers(1, 11, size=(2, 5))
targets[1, 3:] = 0  # padding, ignored by the loss


def objective():
    return label_smoothed_nll(linear(layer_norm(h, g, b, 1e-6), w), targets, 0.1, pad_id=0)


for name, err in zip(["hidden", "gain", "bias", "weight"], check_gradients(objective, [h, g, b, w])):
    print(f"{name:>6}: relative error {err:.2e}")
