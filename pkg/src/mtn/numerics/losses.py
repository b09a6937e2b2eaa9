from __future__ import annotations

import numpy as np

from .tensor import Tensor, _make


def label_smoothed_nll(logits: Tensor, targets: np.ndarray, eps_ls: float, pad_id: int) -> Tensor:
    """Cross-entropy against a smoothed target distribution, averaged over non-pad positions.

    The target distribution puts ``1 - eps_ls`` on the gold token plus ``eps_ls``
    spread uniformly over every vocabulary entry except ``pad_id``. Positions
    whose target is ``pad_id`` are ignored. ``logits`` may have any leading
    shape; ``targets`` must match it without the vocabulary axis.
    """
    if not 0.0 <= eps_ls < 1.0:
        raise ValueError(f"eps_ls must be in [0, 1), got {eps_ls}")
    V = logits.shape[-1]
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise ValueError(f"targets {targets.shape} do not match logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= V):
        raise IndexError(f"target id out of range [0, {V})")

    z = logits.data.reshape(-1, V)
    t = targets.reshape(-1)
    keep = t != pad_id
    n = int(keep.sum())
    if n == 0:
        raise ValueError("no non-pad target positions")

    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    support = np.ones(V, dtype=z.dtype)
    support[pad_id] = 0.0
    q = np.zeros_like(z)
    q += eps_ls / support.sum() * support
    q[np.arange(len(t)), t] += 1.0 - eps_ls
    q[~keep] = 0.0

    loss = -(q * logp).sum() / n

    def backward(g):
        p = np.exp(logp)
        # d/dz of -sum(q log softmax z) = p * sum(q) - q; rows of q sum to 1 or 0
        grad = (p * q.sum(axis=1, keepdims=True) - q) * (g / n)
        logits._accumulate(grad.reshape(logits.shape))

    return _make(np.asarray(loss, dtype=z.dtype), (logits,), backward)


def token_log_probs(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-position log-probability of the target id (no graph)."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
