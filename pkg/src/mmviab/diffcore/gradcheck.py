"""Finite-difference verification of analytic gradients.

Run in float64: central differences lose too many digits in float32.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..errors import NumericsError
from .tensor import Tensor


def grad_check(f, inputs, eps: float = 1e-5, tol: float = 1e-4) -> float:
    """Compare backward-pass gradients of scalar-valued `f` against central differences.

    Returns max over every coordinate of every input of
    |analytic - (f(x+eps e_i) - f(x-eps e_i)) / (2 eps)| / max(1, |analytic|).
    `inputs` are perturbed in place and restored. A warning is emitted when the
    result exceeds `tol`; callers assert on the returned value.
    """
    inputs = list(inputs)
    for t in inputs:
        if not isinstance(t, Tensor):
            raise TypeError("grad_check inputs must be Tensors")
        t.zero_grad()
    out = f(*inputs)
    if not np.isfinite(out.data).all():
        raise NumericsError("grad_check: objective is not finite at the base point")
    out.backward()
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]

    max_rel = 0.0
    for t, ana in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        ana_flat = ana.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f(*inputs).data)
            flat[i] = orig - eps
            f_minus = float(f(*inputs).data)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericsError(
                    f"grad_check: objective is not finite under perturbation of coordinate {i}"
                )
            fd = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(float(ana_flat[i]) - fd) / max(1.0, abs(float(ana_flat[i])))
            if rel > max_rel:
                max_rel = rel
    if max_rel > tol:
        warnings.warn(f"grad_check: max relative error {max_rel:.3e} exceeds tol {tol:.0e}")
    return max_rel
