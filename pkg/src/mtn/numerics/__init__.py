"""Numpy tensors with reverse-mode autodiff, core layers, Adam and the warmup schedule."""

from .gradcheck import check_gradients, numerical_grad, relative_error
from .losses import label_smoothed_nll, token_log_probs
from .nn import Dropout, Embedding, LayerNorm, Linear, Module, ModuleList
from .optim import (Adam, AdamState, ScheduleConfig, adam_step, clip_grad_norm,
                    noam_lr)
from .tensor import (NonFiniteError, ShapeError, Tensor, add, as_tensor, concat,
                     dropout, embedding, exp, layer_norm, linear, log, log_softmax,
                     matmul, mean, mul, no_grad, relu, reshape, softmax, stack, sub,
                     sum_, transpose)

__all__ = [
    "Adam", "AdamState", "Dropout", "Embedding", "LayerNorm", "Linear", "Module",
    "ModuleList", "check_gradients", "numerical_grad", "relative_error", "NonFiniteError", "ScheduleConfig", "ShapeError", "Tensor", "adam_step",
    "add", "as_tensor", "clip_grad_norm", "concat", "dropout", "embedding", "exp",
    "label_smoothed_nll", "layer_norm", "linear", "log", "log_softmax", "matmul", "mean",
    "mul", "no_grad", "noam_lr", "relu", "reshape", "softmax", "stack", "sub", "sum_",
    "token_log_probs", "transpose",
]
