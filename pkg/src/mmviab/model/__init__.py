"""Multimodal viability model: spatial encoder, fusion, temporal attention."""

from .checkpoint import MODEL_MAGIC, TABULAR_MAGIC, load_checkpoint, save_checkpoint
from .config import (
    VISUAL_MODALITIES,
    ModelConfig,
    param_count,
    param_shapes,
    spatial_trunk_prefixes,
)
from .features import (
    ModelInputs,
    instance_channels,
    one_hot_mask,
    prepare_sample,
    rasterize_morph,
)
from .network import (
    extract_patches,
    fuse_frame_tokens,
    multi_head_attention,
    multimodal_forward,
    patch_embed,
    spatial_encode,
    transformer_block,
)
from .params import init_params, trainable

__all__ = [
    "MODEL_MAGIC",
    "TABULAR_MAGIC",
    "load_checkpoint",
    "save_checkpoint",
    "VISUAL_MODALITIES",
    "ModelConfig",
    "param_count",
    "param_shapes",
    "spatial_trunk_prefixes",
    "ModelInputs",
    "instance_channels",
    "one_hot_mask",
    "prepare_sample",
    "rasterize_morph",
    "extract_patches",
    "fuse_frame_tokens",
    "multi_head_attention",
    "multimodal_forward",
    "patch_embed",
    "spatial_encode",
    "transformer_block",
    "init_params",
    "trainable",
]
