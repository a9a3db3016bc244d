"""Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array plus an optional gradient accumulator. Ops in
mmviab.diffcore.ops build a DAG of Tensors; Tensor.backward() walks it in
reverse topological order and accumulates gradients additively, so a tensor
used twice receives the sum of both contributions.

Two precisions are supported through the wrapped array dtype: float64 for
gradient verification (finite differences are unreliable in float32) and
float32 for training.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from ..errors import NumericsError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """N-dimensional real array node in a reverse-mode autodiff graph.

    Data is immutable by convention after construction; only the `grad`
    accumulator is mutated (by backward passes and optimizer bookkeeping).
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if g.shape != self.data.shape:
            raise NumericsError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Reverse-mode sweep from a scalar output.

        Seeds the output gradient with 1 and accumulates into `.grad` of every
        reachable tensor that requires gradients (or has graph parents).
        """
        if self.data.size != 1:
            raise NumericsError(
                f"backward() requires a scalar output, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Arithmetic sugar; real implementations live in ops.py.
    def __add__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.add(self, other)
        return ops.shift(self, float(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __neg__(self):
        from . import ops

        return ops.scale(self, -1.0)

    def __sub__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.sub(self, other)
        return ops.shift(self, -float(other))

    def __mul__(self, other):
        from . import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


def make_node(data, parents, backward_fn) -> Tensor:
    """Build a graph node, pruning the graph when no parent can need gradients."""
    if _grad_enabled and any(p.requires_grad or p._parents for p in parents):
        return Tensor(data, _parents=tuple(parents), _backward=backward_fn)
    return Tensor(data)


def constant(data, dtype=np.float64) -> Tensor:
    """Non-differentiable tensor (model inputs, targets, masks)."""
    return Tensor(np.asarray(data, dtype=dtype))


def parameter(data, dtype=np.float64) -> Tensor:
    """Trainable leaf tensor."""
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)
