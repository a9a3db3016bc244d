"""Configuration and parameter registry for the tabular baseline."""

from __future__ import annotations

from dataclasses import dataclass, fields

from ..data.types import DatasetSchema
from ..errors import ConfigError
from ..model.config import _block_shapes


@dataclass(frozen=True)
class TabularConfig:
    """Column-embedding transformer over treatment EHR and embryo features.

    The schema is stored by name so a checkpoint pins exactly which columns
    (and categorical block widths, including the unknown slot) the parameters
    were built for.
    """

    token_dim: int = 32  # D_t
    layers: int = 2  # L_t
    heads: int = 4
    mlp_ratio: float = 4.0
    use_ehr: bool = True
    use_interp: bool = False
    ehr_numeric: tuple[str, ...] = ()
    ehr_categorical: tuple[tuple[str, int], ...] = ()  # (name, one-hot width)
    interp_names: tuple[str, ...] = ()

    @classmethod
    def for_schema(cls, schema: DatasetSchema, use_ehr: bool = True,
                   use_interp: bool = False, **dims) -> "TabularConfig":
        cfg = cls(
            use_ehr=use_ehr, use_interp=use_interp,
            ehr_numeric=tuple(schema.ehr.numeric) if use_ehr else (),
            ehr_categorical=tuple(
                (name, len(vocab) + 1) for name, vocab in schema.ehr.categorical
            ) if use_ehr else (),
            interp_names=tuple(schema.interp) if use_interp else (),
            **dims,
        )
        cfg.validate()
        return cfg

    def validate(self):
        if not (self.use_ehr or self.use_interp):
            raise ConfigError("at least one modality switch must be on")
        if self.token_dim < 1 or self.token_dim % self.heads:
            raise ConfigError(
                f"token_dim {self.token_dim} not divisible by {self.heads} heads")
        if self.layers < 1:
            raise ConfigError("layers must be positive")
        if self.use_ehr and not (self.ehr_numeric or self.ehr_categorical):
            raise ConfigError("use_ehr requires a non-empty EHR schema")
        if self.use_interp and not self.interp_names:
            raise ConfigError("use_interp requires interpretable feature names")
        for name, width in self.ehr_categorical:
            if width < 2:  # at least one vocabulary entry plus the unknown slot
                raise ConfigError(f"categorical {name}: block width {width} < 2")

    @property
    def ehr_width(self) -> int:
        """Flattened width of the normalized EHR vector this schema implies."""
        return len(self.ehr_numeric) + sum(w for _, w in self.ehr_categorical)

    @property
    def interp_width(self) -> int:
        return len(self.interp_names)

    @property
    def n_feature_tokens(self) -> int:
        n = 0
        if self.use_ehr:
            n += len(self.ehr_numeric) + len(self.ehr_categorical)
        if self.use_interp:
            n += len(self.interp_names)
        return n

    @property
    def sequence_length(self) -> int:
        return 1 + self.n_feature_tokens

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "ehr_categorical":
                value = [list(pair) for pair in value]
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "TabularConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown tabular config keys: {sorted(unknown)}")
        kwargs = dict(obj)
        for key in ("ehr_numeric", "interp_names"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "ehr_categorical" in kwargs:
            kwargs["ehr_categorical"] = tuple(
                (str(name), int(width)) for name, width in kwargs["ehr_categorical"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def tabular_param_shapes(config: TabularConfig) -> dict:
    """Ordered name -> shape map; one affine embedding per numeric column,
    one lookup table per categorical column, no positional entries."""
    config.validate()
    d = config.token_dim
    shapes: dict = {}
    if config.use_ehr:
        for name in config.ehr_numeric:
            shapes[f"tok.ehr.num.{name}.weight"] = (d,)
            shapes[f"tok.ehr.num.{name}.bias"] = (d,)
        for name, width in config.ehr_categorical:
            shapes[f"tok.ehr.cat.{name}.table"] = (width, d)
    if config.use_interp:
        for name in config.interp_names:
            shapes[f"tok.interp.{name}.weight"] = (d,)
            shapes[f"tok.interp.{name}.bias"] = (d,)
    shapes["cls"] = (d,)
    for i in range(config.layers):
        shapes.update(_block_shapes(f"block{i}", d, config.mlp_ratio))
    shapes["head.w"] = (d, 1)
    shapes["head.b"] = (1,)
    return shapes


def tabular_param_count(config: TabularConfig) -> int:
    total = 0
    for shape in tabular_param_shapes(config).values():
        n = 1
        for s in shape:
            n *= s
        total += n
    return total
