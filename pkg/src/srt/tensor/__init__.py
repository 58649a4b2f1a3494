"""Tensor engine: autodiff primitives, Adam, and the checkpoint container."""

from .engine import (
    Tensor, Tape, ShapeError, no_grad, backward,
    add, sub, mul, div, neg, matmul, conv2d,
    reshape, transpose, expand, concat, gather,
    softmax, layer_norm, gelu, relu, sigmoid, softplus,
    exp, log, tsum, tmean, linear,
)
from .adam import AdamState, adam_step, GradientError
from .checkpoint import save_checkpoint, load_checkpoint, CheckpointError
from .gradcheck import numerical_gradient, max_rel_error, check_gradients

__all__ = [
    "Tensor", "Tape", "ShapeError", "no_grad", "backward",
    "add", "sub", "mul", "div", "neg", "matmul", "conv2d",
    "reshape", "transpose", "expand", "concat", "gather",
    "softmax", "layer_norm", "gelu", "relu", "sigmoid", "softplus",
    "exp", "log", "tsum", "tmean", "linear",
    "AdamState", "adam_step", "GradientError",
    "save_checkpoint", "load_checkpoint", "CheckpointError",
    "numerical_gradient", "max_rel_error", "check_gradients",
]
