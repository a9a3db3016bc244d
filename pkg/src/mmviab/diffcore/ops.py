"""Differentiable operations over diffcore Tensors.

Only the operations the viability models need. Shape discipline is strict:
elementwise ops require identical shapes, with the single exception of
last-axis affine parameters (bias vectors, layer-norm gain/shift). Stacked
matmul accepts extra leading batch axes explicitly; nothing else broadcasts.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ShapeError
from .tensor import Tensor, make_node

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715


def _needs(t: Tensor) -> bool:
    return t.requires_grad or bool(t._parents)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; `b` may be a 1-D last-axis bias."""
    bias = b.ndim == 1 and a.ndim > 1 and a.shape[-1] == b.shape[0]
    if not bias and a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} are incompatible")
    out = a.data + b.data

    def backward(g):
        if _needs(a):
            a._accumulate(g)
        if _needs(b):
            gb = g.sum(axis=tuple(range(g.ndim - 1))) if bias else g
            b._accumulate(gb)

    return make_node(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} are incompatible")
    out = a.data - b.data

    def backward(g):
        if _needs(a):
            a._accumulate(g)
        if _needs(b):
            b._accumulate(-g)

    return make_node(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} are incompatible")
    out = a.data * b.data

    def backward(g):
        if _needs(a):
            a._accumulate(g * b.data)
        if _needs(b):
            b._accumulate(g * a.data)

    return make_node(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = a.data * c

    def backward(g):
        if _needs(a):
            a._accumulate(g * c)

    return make_node(out, (a,), backward)


def shift(a: Tensor, c: float) -> Tensor:
    out = a.data + float(c)

    def backward(g):
        if _needs(a):
            a._accumulate(g)

    return make_node(out, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes.

    2-D x 2-D is the base case. Either operand may carry extra leading batch
    axes (the other being 2-D), or both may share identical leading axes.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner extents differ for shapes {a.shape} @ {b.shape}")
    la, lb = a.shape[:-2], b.shape[:-2]
    if la and lb and la != lb:
        raise ShapeError(f"matmul: leading axes differ for shapes {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def _reduce_to(g, shape):
        extra = g.ndim - len(shape)
        return g.sum(axis=tuple(range(extra))) if extra else g

    def backward(g):
        if _needs(a):
            a._accumulate(_reduce_to(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if _needs(b):
            b._accumulate(_reduce_to(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return make_node(out, (a, b), backward)


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = np.transpose(a.data, axes)
    inverse = np.argsort(axes)

    def backward(g):
        if _needs(a):
            a._accumulate(np.transpose(g, inverse))

    return make_node(out, (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = a.data.reshape(shape)

    def backward(g):
        if _needs(a):
            a._accumulate(g.reshape(a.shape))

    return make_node(out, (a,), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        parts = np.split(g, offsets, axis=axis)
        for t, p in zip(tensors, parts):
            if _needs(t):
                t._accumulate(p)

    return make_node(out, tuple(tensors), backward)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = a.data[idx].copy()

    def backward(g):
        if _needs(a):
            full = np.zeros_like(a.data)
            full[idx] = g
            a._accumulate(full)

    return make_node(out, (a,), backward)


def broadcast_leading(a: Tensor, n: int) -> Tensor:
    """Tile `a` along a new leading axis of extent n; backward sums it out."""
    out = np.broadcast_to(a.data, (n,) + a.shape).copy()

    def backward(g):
        if _needs(a):
            a._accumulate(g.sum(axis=0))

    return make_node(out, (a,), backward)


def softmax(x: Tensor, axis: int = -1, key_mask=None) -> Tensor:
    """Stable softmax along `axis`.

    With `key_mask` (boolean, broadcastable onto x along the last axis; only
    axis=-1 supported then), masked entries receive exactly zero weight: their
    logits are replaced with -inf before the max-subtracted exp, so they never
    shift the row max and exp() maps them to an exact 0.0.
    """
    if key_mask is not None:
        if axis not in (-1, x.ndim - 1):
            raise ShapeError("softmax: key_mask requires axis=-1")
        mask = np.broadcast_to(np.asarray(key_mask, dtype=bool), x.shape)
        if not mask.any(axis=-1).all():
            raise ShapeError("softmax: every row must keep at least one unmasked key")
        logits = np.where(mask, x.data, -np.inf)
    else:
        logits = x.data
    m = np.max(logits, axis=axis, keepdims=True)
    e = np.exp(logits - m)
    s = e.sum(axis=axis, keepdims=True)
    out = e / s

    def backward(g):
        if _needs(x):
            inner = (g * out).sum(axis=axis, keepdims=True)
            x._accumulate(out * (g - inner))

    return make_node(out, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance (biased), then affine."""
    n = x.shape[-1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must match last axis ({n},)"
        )
    if eps <= 0:
        raise ConfigError(f"layer_norm: eps must be positive, got {eps}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv_sigma = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_sigma
    out = gamma.data * xhat + beta.data

    def backward(g):
        if _needs(x):
            dxhat = g * gamma.data
            term = dxhat - dxhat.mean(axis=-1, keepdims=True)
            term -= xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(term * inv_sigma)
        reduce_axes = tuple(range(g.ndim - 1))
        if _needs(gamma):
            gamma._accumulate((g * xhat).sum(axis=reduce_axes))
        if _needs(beta):
            beta._accumulate(g.sum(axis=reduce_axes))

    return make_node(out, (x, gamma, beta), backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def backward(g):
        if _needs(x):
            x._accumulate(g * (x.data > 0))

    return make_node(out, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    """tanh-form GELU; derivative is the exact derivative of this form."""
    xd = x.data
    u = _SQRT_2_OVER_PI * (xd + _GELU_CUBIC * xd**3)
    t = np.tanh(u)
    out = 0.5 * xd * (1.0 + t)

    def backward(g):
        if _needs(x):
            du = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_CUBIC * xd**2)
            x._accumulate(g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t**2) * du))

    return make_node(out, (x,), backward)


def sum_all(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.dtype)

    def backward(g):
        if _needs(x):
            x._accumulate(np.broadcast_to(g, x.shape).copy())

    return make_node(out, (x,), backward)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    out = np.asarray(x.data.mean(), dtype=x.dtype)

    def backward(g):
        if _needs(x):
            x._accumulate(np.broadcast_to(g / n, x.shape).copy())

    return make_node(out, (x,), backward)


def huber_loss(pred: Tensor, target, delta: float = 1.0) -> Tensor:
    """Mean Huber loss: 0.5 e^2 inside |e| <= delta, linear outside."""
    if delta <= 0:
        raise ConfigError(f"huber_loss: delta must be positive, got {delta}")
    target = _as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"huber_loss: shapes {pred.shape} and {target.shape} differ")
    e = pred.data - target.data
    abs_e = np.abs(e)
    quad = abs_e <= delta
    losses = np.where(quad, 0.5 * e**2, delta * (abs_e - 0.5 * delta))
    n = losses.size
    out = np.asarray(losses.mean(), dtype=pred.dtype)

    def backward(g):
        de = np.clip(e, -delta, delta) * (g / n)
        if _needs(pred):
            pred._accumulate(de)
        if _needs(target):
            target._accumulate(-de)

    return make_node(out, (pred, target), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight (+ bias); weight is (in, out), bias (out,)."""
    y = matmul(x, weight)
    return add(y, bias) if bias is not None else y
