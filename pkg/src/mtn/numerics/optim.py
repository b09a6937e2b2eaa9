"""Adam with the inverse-square-root warmup schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import NonFiniteError, Tensor

ADAM_BETAS = (0.9, 0.98)
ADAM_EPS = 1e-9


@dataclass
class ScheduleConfig:
    model_dim: int
    warmup_steps: int

    def __post_init__(self):
        if self.model_dim < 1 or self.warmup_steps < 1:
            raise ValueError("model_dim and warmup_steps must be >= 1")


def noam_lr(step: int, cfg: ScheduleConfig) -> float:
    """d^-0.5 * min(step^-0.5, step * warmup^-1.5): linear ramp, then 1/sqrt decay."""
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    return cfg.model_dim ** -0.5 * min(step ** -0.5, step * cfg.warmup_steps ** -1.5)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0

    @classmethod
    def for_params(cls, params: dict[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray | None], state: AdamState,
              lr: float, betas: tuple[float, float] = ADAM_BETAS, eps: float = ADAM_EPS) -> None:
    """One bias-corrected Adam update, in place. Missing gradients count as zero."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if set(params) != set(state.m):
        raise KeyError("Adam state does not cover exactly the trainable parameter set")
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name!r} at step {state.step_count + 1}")
    b1, b2 = betas
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads.get(name)
        m, v = state.m[name], state.v[name]
        if g is None:
            m *= b1
            v *= b2
        else:
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data -= update.astype(p.data.dtype)


def clip_grad_norm(params: list[Tensor], max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most ``max_norm``; return the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2))
                          for p in params if p.grad is not None))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return total


class Adam:
    """Adam bound to a model's named parameters."""

    def __init__(self, named_params: dict[str, Tensor], betas=ADAM_BETAS, eps=ADAM_EPS):
        self.params = dict(named_params)
        self.betas = betas
        self.eps = eps
        self.state = AdamState.for_params(self.params)

    def step(self, lr: float) -> None:
        adam_step(self.params, {k: p.grad for k, p in self.params.items()}, self.state,
                  lr, self.betas, self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
