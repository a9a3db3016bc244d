"""Frame subsampling, geometric augmentation, and tabular normalization."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import ConfigError, DataError
from .types import EHRSchema, EHRVector, EmbryoSample, InterpretableFeatures, MorphFeatures

MAX_FRAMES_DEFAULT = 360
STRIDE_DEFAULT = 4


def subsample_indices(n_frames: int, max_frames: int = MAX_FRAMES_DEFAULT, stride: int = STRIDE_DEFAULT) -> np.ndarray:
    """Clip to max_frames, then keep every stride-th frame starting at 0."""
    if n_frames < 1:
        raise DataError("subsample_indices requires at least one frame")
    return np.arange(0, min(n_frames, max_frames), stride)


def subsample_frames(video: np.ndarray, max_frames: int = MAX_FRAMES_DEFAULT, stride: int = STRIDE_DEFAULT) -> np.ndarray:
    return video[subsample_indices(video.shape[0], max_frames, stride)]


FLIPS = ("none", "horizontal", "vertical")


def apply_frame_geometry(arr: np.ndarray, flip: str, quarter_turns: int, h_axis: int = 1, w_axis: int = 2) -> np.ndarray:
    """Apply one flip and a multiple-of-90-degree rotation to a frame stack."""
    if flip == "horizontal":
        arr = np.flip(arr, axis=w_axis)
    elif flip == "vertical":
        arr = np.flip(arr, axis=h_axis)
    elif flip != "none":
        raise ConfigError(f"unknown flip kind {flip!r}")
    k = quarter_turns % 4
    if k:
        arr = np.rot90(arr, k=k, axes=(h_axis, w_axis))
    return np.ascontiguousarray(arr)


def draw_augmentation(rng: np.random.Generator) -> tuple[str, int]:
    flip = FLIPS[rng.integers(len(FLIPS))]
    quarter_turns = int(rng.integers(4))
    return flip, quarter_turns


def augment_sample(sample: EmbryoSample, rng: np.random.Generator) -> EmbryoSample:
    """Random flip x rotation applied identically to video and every mask channel.

    Scalars (fragmentation, stage, label, tabular features) pass through
    bit-exactly. Frames must be square so quarter turns preserve shape.
    """
    t, h, w, _ = sample.video.shape
    if h != w:
        raise ConfigError(f"augmentation requires square frames, got {h}x{w}")
    flip, quarter_turns = draw_augmentation(rng)
    video = apply_frame_geometry(sample.video, flip, quarter_turns)
    morph = sample.morph
    if morph is not None:
        morph = MorphFeatures(
            zona_sem=apply_frame_geometry(morph.zona_sem, flip, quarter_turns),
            blast_inst=apply_frame_geometry(morph.blast_inst, flip, quarter_turns),
            pronuc_inst=apply_frame_geometry(morph.pronuc_inst, flip, quarter_turns),
            frag=morph.frag,
            stage=morph.stage,
            n_zona_classes=morph.n_zona_classes,
            n_stage_classes=morph.n_stage_classes,
        )
    return replace(sample, video=video, morph=morph)


@dataclass
class TabularNormalizer:
    """Z-scores numeric fields and one-hot encodes categoricals (plus an unknown slot).

    Statistics must be fitted on the training split only; concatenation order
    is fixed by the schema: numerics first, then each categorical's
    [vocab..., unknown] block.
    """

    numeric_names: tuple[str, ...]
    categorical: tuple[tuple[str, tuple[str, ...]], ...]
    means: np.ndarray | None = None
    stds: np.ndarray | None = None

    @classmethod
    def for_ehr(cls, schema: EHRSchema) -> "TabularNormalizer":
        return cls(numeric_names=schema.numeric, categorical=schema.categorical)

    @classmethod
    def for_numeric(cls, names: tuple[str, ...]) -> "TabularNormalizer":
        return cls(numeric_names=tuple(names), categorical=())

    @property
    def width(self) -> int:
        return len(self.numeric_names) + sum(len(v) + 1 for _, v in self.categorical)

    def _numeric_row(self, record) -> np.ndarray:
        values = record.numeric if isinstance(record, EHRVector) else record.values
        return np.array([float(values[n]) for n in self.numeric_names], dtype=np.float64)

    def fit(self, records) -> "TabularNormalizer":
        rows = np.stack([self._numeric_row(r) for r in records]) if self.numeric_names else np.zeros((1, 0))
        self.means = rows.mean(axis=0)
        self.stds = np.maximum(rows.std(axis=0), 1e-6)
        return self

    def to_dict(self) -> dict:
        """JSON-safe snapshot of the fitted statistics, for checkpoint headers."""
        if self.means is None:
            raise ConfigError("normalizer must be fitted before serialization")
        return {
            "numeric_names": list(self.numeric_names),
            "categorical": [[name, list(vocab)] for name, vocab in self.categorical],
            "means": [float(x) for x in self.means],
            "stds": [float(x) for x in self.stds],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TabularNormalizer":
        return cls(
            numeric_names=tuple(obj["numeric_names"]),
            categorical=tuple((str(n), tuple(v)) for n, v in obj["categorical"]),
            means=np.asarray(obj["means"], dtype=np.float64),
            stds=np.asarray(obj["stds"], dtype=np.float64),
        )

    def transform(self, record) -> np.ndarray:
        if self.means is None:
            raise ConfigError("normalizer used before fit()")
        parts = [(self._numeric_row(record) - self.means) / self.stds]
        if self.categorical:
            assert isinstance(record, EHRVector)
            for name, vocab in self.categorical:
                block = np.zeros(len(vocab) + 1, dtype=np.float64)
                value = record.categorical[name]
                idx = vocab.index(value) if value in vocab else len(vocab)  # unknown slot
                block[idx] = 1.0
                parts.append(block)
        return np.concatenate(parts)


def fit_ehr_normalizer(schema: EHRSchema, cycles) -> TabularNormalizer:
    return TabularNormalizer.for_ehr(schema).fit([c.ehr for c in cycles])


def normalize_ehr(train_stats: TabularNormalizer, ehr: EHRVector) -> np.ndarray:
    return train_stats.transform(ehr)


def fit_interp_normalizer(names: tuple[str, ...], embryos) -> TabularNormalizer:
    feats = [e.interp for e in embryos if e.interp is not None]
    if not feats:
        raise DataError("no interpretable features available to fit the normalizer")
    return TabularNormalizer.for_numeric(names).fit(feats)


def normalize_interp(train_stats: TabularNormalizer, interp: InterpretableFeatures) -> np.ndarray:
    return train_stats.transform(interp)
