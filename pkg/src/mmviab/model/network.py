"""Forward graph: factorized spatial/temporal attention with tabular tokens.

Per frame, each enabled visual modality is tokenized into patches and encoded
by a small transformer whose class token becomes the frame's summary. The
summaries (plus projected fragmentation/stage scalars) concatenate into one
frame token. The second stage runs masked self-attention over
[class, frame tokens padded to capacity, EHR token, interpretable token] and
regresses viability from the class position.

Masked slots get exactly zero attention weight, so the score is bitwise
invariant to whatever fills the padding.
"""

from __future__ import annotations

import math

import numpy as np

from ..diffcore import Tensor, constant, ops
from ..errors import ContractError, DataError, ShapeError
from .config import ModelConfig, spatial_trunk_prefixes
from .features import ModelInputs


def extract_patches(frames: np.ndarray, patch: int) -> np.ndarray:
    """(T, H, W, C) -> (T, N, patch*patch*C), row-major patch grid order."""
    t, h, w, c = frames.shape
    if h % patch or w % patch:
        raise ShapeError(f"frame {h}x{w} not divisible into {patch}x{patch} patches")
    gh, gw = h // patch, w // patch
    x = frames.reshape(t, gh, patch, gw, patch, c)
    x = x.transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(x).reshape(t, gh * gw, patch * patch * c)


def patch_embed(frames, modality: str, params: dict, config: ModelConfig) -> Tensor:
    """Frames -> token sequences [class, patch tokens...] + positional embedding.

    Accepts one frame (H, W, C) or a stack (T, H, W, C); returns (N+1, d) or
    (T, N+1, d) correspondingly.
    """
    if modality not in config.visual_modalities:
        raise ContractError(f"modality {modality!r} is not enabled in this config")
    arr = np.asarray(frames, dtype=np.float64)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.shape[-1] != config.modality_channels(modality):
        raise ShapeError(
            f"{modality} frames have {arr.shape[-1]} channels, config expects "
            f"{config.modality_channels(modality)}")
    t = arr.shape[0]
    patches = constant(extract_patches(arr, config.patch_size),
                           dtype=params["spatial.cls"].dtype)
    tokens = ops.linear(patches, params[f"embed.{modality}.weight"],
                        params[f"embed.{modality}.bias"])  # (T, N, d)
    cls = ops.broadcast_leading(ops.reshape(params["spatial.cls"], (1, config.spatial_dim)), t)
    tokens = ops.concat([cls, tokens], axis=1)  # (T, N+1, d)
    pos = ops.broadcast_leading(params["spatial.pos"], t)
    tokens = ops.add(tokens, pos)
    return ops.reshape(tokens, tokens.shape[1:]) if single else tokens


def multi_head_attention(tokens: Tensor, params: dict, prefix: str, n_heads: int,
                         key_mask: np.ndarray | None = None) -> Tensor:
    """Batched MSA on (B, S, width); key_mask (B, S) marks attendable keys."""
    b, s, width = tokens.shape
    if width % n_heads:
        raise ShapeError(f"token width {width} not divisible by {n_heads} heads")
    dh = width // n_heads
    q = ops.linear(tokens, params[f"{prefix}.wq"], params[f"{prefix}.bq"])
    k = ops.linear(tokens, params[f"{prefix}.wk"], params[f"{prefix}.bk"])
    v = ops.linear(tokens, params[f"{prefix}.wv"], params[f"{prefix}.bv"])

    def split_heads(x):
        return ops.permute(ops.reshape(x, (b, s, n_heads, dh)), (0, 2, 1, 3))

    q, k, v = split_heads(q), split_heads(k), split_heads(v)  # (B, H, S, dh)
    scores = ops.scale(ops.matmul(q, ops.permute(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    mask = None
    if key_mask is not None:
        key_mask = np.asarray(key_mask, dtype=bool)
        if key_mask.shape != (b, s):
            raise ShapeError(f"key_mask shape {key_mask.shape} != ({b}, {s})")
        mask = key_mask[:, None, None, :]  # broadcast over heads and queries
    attn = ops.softmax(scores, axis=-1, key_mask=mask)
    mixed = ops.matmul(attn, v)  # (B, H, S, dh)
    merged = ops.reshape(ops.permute(mixed, (0, 2, 1, 3)), (b, s, width))
    return ops.linear(merged, params[f"{prefix}.wo"], params[f"{prefix}.bo"])


def transformer_block(tokens: Tensor, params: dict, prefix: str, n_heads: int,
                      key_mask: np.ndarray | None = None) -> Tensor:
    """Pre-norm residual block: x + MSA(LN(x)), then + MLP(LN(.))."""
    normed = ops.layer_norm(tokens, params[f"{prefix}.ln1.gamma"], params[f"{prefix}.ln1.beta"])
    attended = multi_head_attention(normed, params, f"{prefix}.attn", n_heads, key_mask)
    y = ops.add(tokens, attended)
    normed2 = ops.layer_norm(y, params[f"{prefix}.ln2.gamma"], params[f"{prefix}.ln2.beta"])
    hidden = ops.gelu(ops.linear(normed2, params[f"{prefix}.mlp.w1"], params[f"{prefix}.mlp.b1"]))
    expanded = ops.linear(hidden, params[f"{prefix}.mlp.w2"], params[f"{prefix}.mlp.b2"])
    return ops.add(y, expanded)


def _spatial_trunk(tokens: Tensor, params: dict, config: ModelConfig, prefix: str) -> Tensor:
    for i in range(config.spatial_layers):
        tokens = transformer_block(tokens, params, f"{prefix}.block{i}", config.spatial_heads)
    return tokens


def _class_tokens(tokens: Tensor) -> Tensor:
    """(T, N+1, d) -> (T, d): the class position of every sequence."""
    t, _, d = tokens.shape
    return ops.reshape(ops.slice_axis(tokens, 1, 0, 1), (t, d))


def spatial_encode(frames, modality: str, params: dict, config: ModelConfig) -> Tensor:
    """Per-frame embeddings f_s: (T, H, W, C_mod) -> (T, d)."""
    tokens = patch_embed(frames, modality, params, config)
    if tokens.ndim == 2:
        tokens = ops.reshape(tokens, (1,) + tokens.shape)
    prefix = "spatial" if config.share_spatial_trunk else f"spatial.{modality}"
    return _class_tokens(_spatial_trunk(tokens, params, config, prefix))


def _encode_all_visual(inputs: ModelInputs, params: dict, config: ModelConfig) -> dict:
    """Encode every enabled visual modality, batching them through a shared trunk."""
    stacks = {m: getattr(inputs, m) for m in config.visual_modalities}
    for m, arr in stacks.items():
        if arr is None:
            raise ContractError(f"modality {m} enabled but its input is missing")
    if not config.share_spatial_trunk:
        return {m: spatial_encode(arr, m, params, config) for m, arr in stacks.items()}
    embedded = [patch_embed(stacks[m], m, params, config) for m in config.visual_modalities]
    batched = ops.concat(embedded, axis=0) if len(embedded) > 1 else embedded[0]
    encoded = _class_tokens(_spatial_trunk(batched, params, config, "spatial"))
    out = {}
    offset = 0
    for m in config.visual_modalities:
        t = stacks[m].shape[0]
        out[m] = ops.slice_axis(encoded, 0, offset, offset + t)
        offset += t
    return out


def fuse_frame_tokens(params: dict, config: ModelConfig, video: Tensor | None = None,
                      zona: Tensor | None = None, blast: Tensor | None = None,
                      pronuc: Tensor | None = None, scalars=None) -> Tensor:
    """Concatenate per-modality frame summaries and project to the shared width."""
    supplied = {"video": video, "zona": zona, "blast": blast, "pronuc": pronuc}
    parts = []
    for m in ("video", "zona", "blast", "pronuc"):
        enabled = m in config.visual_modalities
        if supplied[m] is None and enabled:
            raise ContractError(f"modality {m} enabled but no embedding supplied")
        if supplied[m] is not None and not enabled:
            raise ContractError(f"modality {m} is disabled but an embedding was supplied")
        if enabled:
            parts.append(supplied[m])
    if config.use_morph:
        if scalars is None:
            raise ContractError("morph scalars (frag + stage) missing")
        sc = constant(np.asarray(scalars), dtype=parts[0].dtype)
        parts.append(ops.linear(sc, params["scalarproj.weight"], params["scalarproj.bias"]))
    elif scalars is not None:
        raise ContractError("morph scalars supplied but use_morph is disabled")
    fused = parts[0] if len(parts) == 1 else ops.concat(parts, axis=-1)
    return ops.linear(fused, params["fusion.weight"], params["fusion.bias"])


def multimodal_forward(inputs: ModelInputs, params: dict, config: ModelConfig,
                       trace: dict | None = None,
                       pad_fill: np.ndarray | None = None) -> Tensor:
    """Full forward pass to the scalar viability score.

    `trace`, when given a dict, receives the constructed pre-attention
    sequence and key mask for structural inspection. `pad_fill` overrides the
    zeros placed in masked padding slots; the mask contract guarantees the
    score does not depend on it, and audits exercise exactly that.
    """
    dtype = params["mm.cls"].dtype
    d_mm = config.mm_dim
    pieces = [ops.reshape(params["mm.cls"], (1, d_mm))]
    mask = [True]
    if config.uses_visual:
        embeddings = _encode_all_visual(inputs, params, config)
        fused = fuse_frame_tokens(params, config, scalars=inputs.scalars
                                  if config.use_morph else None, **embeddings)
        t = fused.shape[0]
        if t > config.max_frames:
            raise DataError(f"{t} frames exceed model capacity F={config.max_frames}")
        pieces.append(fused)
        mask.extend([True] * t)
        if t < config.max_frames:
            n_pad = config.max_frames - t
            fill = np.zeros((n_pad, d_mm)) if pad_fill is None else pad_fill
            if fill.shape != (n_pad, d_mm):
                raise ContractError(
                    f"pad_fill shape {fill.shape} does not match padding block {(n_pad, d_mm)}")
            pieces.append(constant(fill, dtype=dtype))
            mask.extend([False] * n_pad)
    if config.use_ehr:
        if inputs.ehr_vec is None:
            raise ContractError("use_ehr is set but inputs carry no EHR vector")
        e = constant(inputs.ehr_vec.reshape(1, -1), dtype=dtype)
        pieces.append(ops.linear(e, params["ehrproj.weight"], params["ehrproj.bias"]))
        mask.append(True)
    if config.use_interp:
        if inputs.interp_vec is None:
            raise ContractError("use_interp is set but inputs carry no feature vector")
        e = constant(inputs.interp_vec.reshape(1, -1), dtype=dtype)
        pieces.append(ops.linear(e, params["interpproj.weight"], params["interpproj.bias"]))
        mask.append(True)
    if len(pieces) == 1:
        raise ContractError("no modality produced any token besides the class slot")
    seq = ops.concat(pieces, axis=0)
    seq = ops.add(seq, params["mm.pos"])
    key_mask = np.asarray(mask, dtype=bool)
    if trace is not None:
        trace["sequence"] = seq.data.copy()
        trace["key_mask"] = key_mask.copy()
    tokens = ops.reshape(seq, (1,) + seq.shape)
    for i in range(config.mm_layers):
        tokens = transformer_block(tokens, params, f"mm.block{i}", config.mm_heads,
                                   key_mask[None, :])
    cls_out = ops.reshape(ops.slice_axis(ops.reshape(tokens, seq.shape), 0, 0, 1), (1, d_mm))
    hidden = ops.relu(ops.linear(cls_out, params["head.w1"], params["head.b1"]))
    score = ops.linear(hidden, params["head.w2"], params["head.b2"])
    return ops.reshape(score, ())
