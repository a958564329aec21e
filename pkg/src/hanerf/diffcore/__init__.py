"""Differentiable numpy substrate: tensors, reverse-mode gradients, Adam."""

from .gradcheck import GradientReport, gradient_check, relative_error
from .optim import ParameterSet, adam_step, as_tensors, clip_by_global_norm, forward_backward
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    composite,
    concat,
    conv2d,
    cos,
    div,
    exp,
    gather,
    getitem,
    global_avg_pool,
    linear,
    matmul,
    mean,
    mul,
    relu,
    repeat_rows,
    reshape,
    sigmoid,
    sin,
    softplus,
    square,
    sub,
    tabs,
    transpose,
    tsum,
)

__all__ = [
    "GradientReport",
    "ParameterSet",
    "Tensor",
    "adam_step",
    "add",
    "as_tensor",
    "as_tensors",
    "backward",
    "clip_by_global_norm",
    "composite",
    "concat",
    "conv2d",
    "cos",
    "div",
    "exp",
    "forward_backward",
    "gather",
    "getitem",
    "global_avg_pool",
    "gradient_check",
    "linear",
    "matmul",
    "mean",
    "mul",
    "relative_error",
    "relu",
    "repeat_rows",
    "reshape",
    "sigmoid",
    "sin",
    "softplus",
    "square",
    "sub",
    "tabs",
    "transpose",
    "tsum",
]
