"""Forward pass of the column-embedding transformer regressor.

Every numeric column becomes one token through its own affine embedding
(value * w + b); every categorical column becomes one token by looking up its
one-hot block in a learned table. Feature tokens carry no positional
embedding: columns are an unordered set, and reordering the schema together
with its named parameters must not move the score. A class token is prepended
and read out through a linear head after the shared transformer blocks.
"""

from __future__ import annotations

import numpy as np

from ..diffcore import Tensor, constant, ops
from ..errors import ContractError
from ..model.network import transformer_block
from ..model.params import init_from_shapes
from .config import TabularConfig, tabular_param_shapes


def init_tabular_params(config: TabularConfig, seed: int = 0, dtype=np.float32) -> dict:
    return init_from_shapes(tabular_param_shapes(config), seed, dtype)


def _numeric_token(value: float, params: dict, stem: str) -> Tensor:
    token = ops.add(ops.scale(params[f"{stem}.weight"], float(value)),
                    params[f"{stem}.bias"])
    return ops.reshape(token, (1,) + token.shape)


def _check_width(vec: np.ndarray, expected: int, what: str):
    vec = np.asarray(vec, dtype=np.float64).reshape(-1)
    if vec.shape != (expected,):
        raise ContractError(
            f"{what} vector has width {vec.shape[0]}, schema expects {expected}")
    return vec


def tabular_forward(params: dict, config: TabularConfig,
                    ehr_vec: np.ndarray | None = None,
                    interp_vec: np.ndarray | None = None,
                    trace: dict | None = None) -> Tensor:
    """Normalized feature vectors -> scalar viability score.

    Vectors must come from the dataset normalizers fitted on the training
    split; the flat EHR layout (numerics first, then each categorical's
    one-hot block) is resliced here using the widths pinned in the config.
    """
    d = config.token_dim
    pieces = [ops.reshape(params["cls"], (1, d))]
    if config.use_ehr:
        if ehr_vec is None:
            raise ContractError("use_ehr is set but no EHR vector was supplied")
        vec = _check_width(ehr_vec, config.ehr_width, "EHR")
        offset = 0
        for name in config.ehr_numeric:
            pieces.append(_numeric_token(vec[offset], params, f"tok.ehr.num.{name}"))
            offset += 1
        for name, width in config.ehr_categorical:
            block = constant(vec[offset:offset + width].reshape(1, width),
                             dtype=params["cls"].dtype)
            pieces.append(ops.matmul(block, params[f"tok.ehr.cat.{name}.table"]))
            offset += width
    elif ehr_vec is not None:
        raise ContractError("EHR vector supplied but use_ehr is disabled")
    if config.use_interp:
        if interp_vec is None:
            raise ContractError("use_interp is set but no feature vector was supplied")
        vec = _check_width(interp_vec, config.interp_width, "interpretable")
        for i, name in enumerate(config.interp_names):
            pieces.append(_numeric_token(vec[i], params, f"tok.interp.{name}"))
    elif interp_vec is not None:
        raise ContractError("interpretable vector supplied but use_interp is disabled")
    seq = ops.concat(pieces, axis=0)  # (n + 1, d), class token first
    if trace is not None:
        trace["sequence"] = seq.data.copy()
    tokens = ops.reshape(seq, (1,) + seq.shape)
    for i in range(config.layers):
        tokens = transformer_block(tokens, params, f"block{i}", config.heads)
    cls_out = ops.reshape(ops.slice_axis(ops.reshape(tokens, seq.shape), 0, 0, 1), (1, d))
    score = ops.linear(cls_out, params["head.w"], params["head.b"])
    return ops.reshape(score, ())
