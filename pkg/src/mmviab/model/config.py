"""Architecture configuration and the parameter shape registry.

The shape registry is the single source of truth for which parameters exist
under a config: initialization, checkpointing, the optimizer, and the
parameter-count assertion all enumerate it rather than hard-coding names.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from ..errors import ConfigError

VISUAL_MODALITIES = ("video", "zona", "blast", "pronuc")


@dataclass(frozen=True)
class ModelConfig:
    frame_size: int = 32  # H = W
    patch_size: int = 8
    channels: int = 1  # grayscale video
    spatial_dim: int = 32  # d, per-frame token width
    spatial_layers: int = 1  # L
    spatial_heads: int = 4
    mm_dim: int = 64  # D, multimodal token width
    mm_layers: int = 4  # L'
    mm_heads: int = 4
    mlp_ratio: float = 4.0  # block MLP hidden = ratio * width
    head_hidden: int = 64  # regression head hidden width
    use_video: bool = True
    use_morph: bool = False
    use_ehr: bool = False
    use_interp: bool = False
    n_zona_classes: int = 3  # K_z
    n_stage_classes: int = 9  # K_s
    scalar_dim: int = 0  # d_rc; 0 means "use spatial_dim"
    freeze_spatial: bool = False
    share_spatial_trunk: bool = True
    max_frames: int = 90  # F, post-subsampling capacity
    ehr_dim: int = 0
    interp_dim: int = 0

    def validate(self):
        if self.frame_size < 1 or self.patch_size < 1 or self.frame_size % self.patch_size:
            raise ConfigError(
                f"frame size {self.frame_size} must divide into patches of {self.patch_size}")
        if self.spatial_dim % self.spatial_heads:
            raise ConfigError(
                f"spatial_dim {self.spatial_dim} not divisible by {self.spatial_heads} heads")
        if self.mm_dim % self.mm_heads:
            raise ConfigError(f"mm_dim {self.mm_dim} not divisible by {self.mm_heads} heads")
        if not (self.use_video or self.use_morph or self.use_ehr or self.use_interp):
            raise ConfigError("at least one modality must be enabled")
        if self.use_ehr and self.ehr_dim < 1:
            raise ConfigError("use_ehr requires ehr_dim >= 1")
        if self.use_interp and self.interp_dim < 1:
            raise ConfigError("use_interp requires interp_dim >= 1")
        if self.max_frames < 1:
            raise ConfigError("max_frames must be positive")
        for name in ("spatial_layers", "mm_layers", "head_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    @property
    def uses_visual(self) -> bool:
        return self.use_video or self.use_morph

    @property
    def d_rc(self) -> int:
        return self.scalar_dim if self.scalar_dim > 0 else self.spatial_dim

    @property
    def n_patches(self) -> int:
        return (self.frame_size // self.patch_size) ** 2

    @property
    def visual_modalities(self) -> tuple[str, ...]:
        mods = ()
        if self.use_video:
            mods += ("video",)
        if self.use_morph:
            mods += ("zona", "blast", "pronuc")
        return mods

    def modality_channels(self, modality: str) -> int:
        if modality == "video":
            return self.channels
        if modality == "zona":
            return self.n_zona_classes
        if modality in ("blast", "pronuc"):
            return 2  # occupancy + boundary channels
        raise ConfigError(f"unknown visual modality {modality!r}")

    @property
    def fused_width(self) -> int:
        """Pre-projection width of the concatenated frame token."""
        w = self.spatial_dim * len(self.visual_modalities)
        if self.use_morph:
            w += self.d_rc
        return w

    @property
    def n_tabular_tokens(self) -> int:
        return int(self.use_ehr) + int(self.use_interp)

    @property
    def sequence_length(self) -> int:
        """Multimodal sequence: class + frame slots + tabular tokens."""
        frames = self.max_frames if self.uses_visual else 0
        return 1 + frames + self.n_tabular_tokens

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        cfg = cls(**obj)
        cfg.validate()
        return cfg


def _block_shapes(prefix: str, width: int, mlp_ratio: float) -> dict:
    hidden = max(1, int(round(width * mlp_ratio)))
    return {
        f"{prefix}.ln1.gamma": (width,),
        f"{prefix}.ln1.beta": (width,),
        f"{prefix}.attn.wq": (width, width),
        f"{prefix}.attn.bq": (width,),
        f"{prefix}.attn.wk": (width, width),
        f"{prefix}.attn.bk": (width,),
        f"{prefix}.attn.wv": (width, width),
        f"{prefix}.attn.bv": (width,),
        f"{prefix}.attn.wo": (width, width),
        f"{prefix}.attn.bo": (width,),
        f"{prefix}.ln2.gamma": (width,),
        f"{prefix}.ln2.beta": (width,),
        f"{prefix}.mlp.w1": (width, hidden),
        f"{prefix}.mlp.b1": (hidden,),
        f"{prefix}.mlp.w2": (hidden, width),
        f"{prefix}.mlp.b2": (width,),
    }


def spatial_trunk_prefixes(config: ModelConfig) -> tuple[str, ...]:
    if config.share_spatial_trunk:
        return ("spatial",)
    return tuple(f"spatial.{m}" for m in config.visual_modalities)


def param_shapes(config: ModelConfig) -> dict:
    """Ordered name -> shape map for every parameter the config implies."""
    config.validate()
    d = config.spatial_dim
    shapes: dict = {}
    if config.uses_visual:
        patch_in = config.patch_size * config.patch_size
        for m in config.visual_modalities:
            shapes[f"embed.{m}.weight"] = (patch_in * config.modality_channels(m), d)
            shapes[f"embed.{m}.bias"] = (d,)
        shapes["spatial.cls"] = (d,)
        shapes["spatial.pos"] = (config.n_patches + 1, d)
        for prefix in spatial_trunk_prefixes(config):
            for i in range(config.spatial_layers):
                shapes.update(_block_shapes(f"{prefix}.block{i}", d, config.mlp_ratio))
        if config.use_morph:
            shapes["scalarproj.weight"] = (1 + config.n_stage_classes, config.d_rc)
            shapes["scalarproj.bias"] = (config.d_rc,)
        shapes["fusion.weight"] = (config.fused_width, config.mm_dim)
        shapes["fusion.bias"] = (config.mm_dim,)
    if config.use_ehr:
        shapes["ehrproj.weight"] = (config.ehr_dim, config.mm_dim)
        shapes["ehrproj.bias"] = (config.mm_dim,)
    if config.use_interp:
        shapes["interpproj.weight"] = (config.interp_dim, config.mm_dim)
        shapes["interpproj.bias"] = (config.mm_dim,)
    shapes["mm.cls"] = (config.mm_dim,)
    shapes["mm.pos"] = (config.sequence_length, config.mm_dim)
    for i in range(config.mm_layers):
        shapes.update(_block_shapes(f"mm.block{i}", config.mm_dim, config.mlp_ratio))
    shapes["head.w1"] = (config.mm_dim, config.head_hidden)
    shapes["head.b1"] = (config.head_hidden,)
    shapes["head.w2"] = (config.head_hidden, 1)
    shapes["head.b2"] = (1,)
    return shapes


def param_count(config: ModelConfig) -> int:
    total = 0
    for shape in param_shapes(config).values():
        n = 1
        for s in shape:
            n *= s
        total += n
    return total
