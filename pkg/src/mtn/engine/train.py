"""Joint objective, simulated token-level decoding, and the training loop."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..data.batching import Batch, make_batches, pad_ids
from ..data.dataset import DialogueExample
from ..data.features import FeatureStore
from ..data.text import PAD_ID, Vocabulary
from ..model import MtnModel
from ..numerics.losses import label_smoothed_nll
from ..numerics.optim import Adam, ScheduleConfig, clip_grad_norm, noam_lr
from ..numerics.tensor import NonFiniteError, Tensor, add, no_grad
from .checkpoint import save_checkpoint

log = logging.getLogger(__name__)


def crop_target(target_ids: Sequence[int], p: float, rng: np.random.Generator) -> list[int]:
    """With probability ``p`` keep only the first i tokens, i uniform on {2, ..., L-1}.

    Targets of length 3 or less have no crop position and pass through unchanged.
    """
    ids = list(target_ids)
    L = len(ids)
    if L <= 3 or p <= 0.0:
        return ids
    if rng.random() >= p:
        return ids
    i = int(rng.integers(2, L))  # upper bound exclusive: i in [2, L-1]
    return ids[:i]


@dataclass
class TrainConfig:
    epochs: int = 17
    max_steps: int | None = None
    warmup_steps: int = 9660
    label_smoothing: float = 0.1
    sim_probability: float = 0.5
    batch_size: int = 32
    seed: int = 0
    checkpoint_dir: str | None = None
    validate_every: int | None = None  # steps; None = once per epoch
    grad_clip: float = 5.0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.sim_probability <= 1.0:
            raise ValueError("sim_probability must be in [0, 1]")
        if self.batch_size < 1 or self.warmup_steps < 1:
            raise ValueError("batch_size and warmup_steps must be >= 1")


def split_target(targets: Sequence[Sequence[int]]):
    """Offset by one: decoder input drops the last token, labels drop the first."""
    tgt_in, in_len = pad_ids([t[:-1] for t in targets])
    labels, _ = pad_ids([t[1:] for t in targets])
    return tgt_in, in_len, labels


def query_labels(batch: Batch, causal: bool) -> np.ndarray:
    """Regeneration labels: the query itself, or the next query token when causally masked."""
    if causal:
        labels = np.full_like(batch.que, PAD_ID)
        labels[:, :-1] = batch.que[:, 1:]
        return labels
    return batch.que


def compute_loss(batch: Batch, model: MtnModel, eps_ls: float = 0.1, p: float = 0.0,
                 rng: np.random.Generator | None = None,
                 feats: dict[str, np.ndarray] | None = None) -> tuple[Tensor, dict[str, float]]:
    """L(T) + L(Q): smoothed CE on the (possibly cropped) target, plus query regeneration."""
    if len(batch) == 0:
        raise ValueError("compute_loss on an empty batch")
    targets = batch.target_lists()
    if p > 0.0:
        if rng is None:
            raise ValueError("cropping needs an rng")
        targets = [crop_target(t, p, rng) for t in targets]
    tgt_in, in_len, labels = split_target(targets)
    logits, q_logits = model(batch, tgt_in, in_len, feats)
    loss_t = label_smoothed_nll(logits, labels, eps_ls, PAD_ID)
    components = {"response": float(loss_t.data)}
    loss = loss_t
    if q_logits is not None:
        q_lab = query_labels(batch, model.cfg.qae_causal)
        if np.any(q_lab != PAD_ID):
            loss_q = label_smoothed_nll(q_logits, q_lab, eps_ls, PAD_ID)
            components["query"] = float(loss_q.data)
            loss = add(loss_t, loss_q)
    return loss, components


def perplexity(model: MtnModel, batches: Sequence[Batch]) -> float:
    """exp of the unsmoothed per-token NLL over full (uncropped) targets, eval mode."""
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    with no_grad():
        for b in batches:
            tgt_in, in_len, labels = split_target(b.target_lists())
            logits, _ = model(b, tgt_in, in_len)
            n = int((labels != PAD_ID).sum())
            total += float(label_smoothed_nll(logits, labels, 0.0, PAD_ID).data) * n
            count += n
    model.train(was_training)
    return math.exp(total / count)


@dataclass
class TrainResult:
    steps: int = 0
    log: list[dict] = field(default_factory=list)
    validations: list[dict] = field(default_factory=list)
    best: dict | None = None
    optimizer: Adam | None = None


def train(examples: Sequence[DialogueExample], features: FeatureStore | None, config: TrainConfig,
          model: MtnModel, vocab: Vocabulary, valid_examples: Sequence[DialogueExample] | None = None,
          callback: Callable[[int, MtnModel, dict], bool] | None = None) -> TrainResult:
    """Adam + warmup schedule over length-sorted batches.

    ``callback(step, model, record)`` runs after every step; returning True stops training.
    Validation perplexity is computed on ``valid_examples`` (the training set if None) every
    ``validate_every`` steps, and a checkpoint is written per validation when a directory is set.
    """
    config.validate()
    if model.cfg.vocab_size != len(vocab):
        raise ValueError(f"model vocab_size {model.cfg.vocab_size} != vocabulary size {len(vocab)}")
    mods = model.cfg.modality_names
    batches = make_batches(examples, config.batch_size, None, vocab, features, mods)
    valid = batches if valid_examples is None else make_batches(
        valid_examples, config.batch_size, None, vocab, features, mods)
    rng = np.random.default_rng(config.seed)
    opt = Adam(dict(model.named_parameters()))
    sched = ScheduleConfig(model.cfg.d_model, config.warmup_steps)
    every = config.validate_every or len(batches)
    ckdir = Path(config.checkpoint_dir) if config.checkpoint_dir else None
    result = TrainResult(optimizer=opt)
    step = 0
    model.train()
    for epoch in range(config.epochs):
        for bi in rng.permutation(len(batches)):
            step += 1
            loss, comps = compute_loss(batches[bi], model, config.label_smoothing,
                                       config.sim_probability, rng)
            if not np.isfinite(loss.data):
                raise NonFiniteError(f"loss is {float(loss.data)} at step {step} "
                                     f"(epoch {epoch + 1}, components {comps})")
            opt.zero_grad()
            loss.backward()
            gnorm = clip_grad_norm(opt.params.values(), config.grad_clip)
            lr = noam_lr(step, sched)
            opt.step(lr)
            record = {"step": step, "epoch": epoch + 1, "lr": lr, "loss": float(loss.data),
                      "grad_norm": gnorm, **comps}
            result.log.append(record)
            if step % every == 0:
                ppl = perplexity(model, valid)
                entry = {"step": step, "val_ppl": ppl}
                if ckdir is not None:
                    name = f"step{step:07d}"  # relative to checkpoint_dir
                    save_checkpoint(ckdir / name, model, vocab, step, opt.state,
                                    extra={"val_ppl": ppl})
                    entry["checkpoint"] = name
                result.validations.append(entry)
                # latest checkpoint among those with the lowest perplexity
                if result.best is None or ppl <= result.best["val_ppl"]:
                    result.best = entry
                log.info("step %d val_ppl %.4f", step, ppl)
            result.steps = step
            if callback is not None and callback(step, model, record):
                model.eval()
                return result
            if config.max_steps is not None and step >= config.max_steps:
                model.eval()
                return result
    model.eval()
    return result
