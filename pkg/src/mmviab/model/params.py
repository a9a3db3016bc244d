"""Parameter initialization and trainability bookkeeping."""

from __future__ import annotations

import numpy as np

from ..diffcore import Tensor
from .config import ModelConfig, param_shapes


def init_from_shapes(shapes: dict, seed: int = 0, dtype=np.float32) -> dict:
    """Named parameter map: projections/embeddings ~ N(0, 0.02), LN affine
    identity, biases zero. Draw order follows the shape registry, so the same
    seed always produces the same parameters."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape in shapes.items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            data = np.ones(shape)
        elif leaf == "beta" or leaf.startswith("b"):
            data = np.zeros(shape)
        else:  # weights, class tokens, positional embeddings, lookup tables
            data = rng.normal(0.0, 0.02, size=shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True)
    return params


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> dict:
    params = init_from_shapes(param_shapes(config), seed, dtype)
    if config.freeze_spatial:
        for name, p in params.items():
            if name.startswith(("spatial.", "embed.")):
                p.requires_grad = False
    return params


def trainable(params: dict) -> dict:
    return {name: p for name, p in params.items() if p.requires_grad}
