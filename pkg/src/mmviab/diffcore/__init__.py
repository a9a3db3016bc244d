"""Minimal differentiable numeric core backing the viability models."""

from .gradcheck import grad_check
from .ops import (
    add,
    broadcast_leading,
    concat,
    gelu,
    huber_loss,
    layer_norm,
    linear,
    matmul,
    mean_all,
    mul,
    permute,
    relu,
    reshape,
    scale,
    shift,
    slice_axis,
    softmax,
    sub,
    sum_all,
)
from .tensor import Tensor, constant, grad_enabled, no_grad, parameter

__all__ = [
    "Tensor",
    "add",
    "broadcast_leading",
    "concat",
    "constant",
    "gelu",
    "grad_check",
    "grad_enabled",
    "huber_loss",
    "layer_norm",
    "linear",
    "matmul",
    "mean_all",
    "mul",
    "no_grad",
    "parameter",
    "permute",
    "relu",
    "reshape",
    "scale",
    "shift",
    "slice_axis",
    "softmax",
    "sub",
    "sum_all",
]
