"""Adam optimizer with bias correction, operating on named parameter maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericsError


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the parameter map."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def init_adam_state(params: dict) -> AdamState:
    state = AdamState()
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(params: dict, state: AdamState, learning_rate: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """One in-place update from the gradients stored on the parameters.

    Frozen parameters and parameters without a gradient this step are left
    alone. All gradients are checked before anything is mutated, so a
    non-finite gradient aborts the step atomically.
    """
    live = []
    for name, p in params.items():
        if not p.requires_grad or p.grad is None:
            continue
        if not np.isfinite(p.grad).all():
            raise NumericsError(
                f"non-finite gradient in parameter {name} at step {state.step + 1}")
        live.append((name, p))
    state.step += 1
    t = state.step
    for name, p in live:
        g = p.grad
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data -= learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return state
