"""Raw sample -> model input arrays: subsampling, scaling, mask rasterization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data.preprocess import MAX_FRAMES_DEFAULT, STRIDE_DEFAULT, subsample_indices
from ..data.types import EmbryoSample, MorphFeatures
from ..errors import ContractError, DataError
from .config import ModelConfig


@dataclass
class ModelInputs:
    """Preprocessed per-embryo arrays, float64, ready for the forward pass."""

    video: np.ndarray | None = None  # (T, H, W, C) in [0, 1]
    zona: np.ndarray | None = None  # (T, H, W, K_z) one-hot
    blast: np.ndarray | None = None  # (T, H, W, 2) occupancy + boundary
    pronuc: np.ndarray | None = None  # (T, H, W, 2)
    scalars: np.ndarray | None = None  # (T, 1 + K_s): frag + stage one-hot
    ehr_vec: np.ndarray | None = None
    interp_vec: np.ndarray | None = None

    @property
    def n_frames(self) -> int:
        for arr in (self.video, self.zona, self.blast, self.pronuc):
            if arr is not None:
                return arr.shape[0]
        return 0


def one_hot_mask(ids: np.ndarray, n_classes: int) -> np.ndarray:
    """(T, H, W) class ids -> (T, H, W, n_classes) one-hot float."""
    if ids.max(initial=0) >= n_classes:
        raise DataError(f"class id {int(ids.max())} exceeds declared count {n_classes}")
    return (ids[..., None] == np.arange(n_classes)).astype(np.float64)


def instance_channels(ids: np.ndarray) -> np.ndarray:
    """(T, H, W) instance ids -> (T, H, W, 2) occupancy and boundary maps.

    Instance identity is arbitrary, so the channels depend only on the
    geometry: occupancy marks any foreground id, boundary marks foreground
    pixels adjacent (4-neighborhood) to a different id or to background.
    This keeps the encoding invariant to id permutation and to flips/turns.
    """
    occ = ids > 0
    padded = np.pad(ids, ((0, 0), (1, 1), (1, 1)), mode="constant")
    boundary = np.zeros_like(occ)
    center = padded[:, 1:-1, 1:-1]
    for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        neighbor = padded[:, 1 + dy : padded.shape[1] - 1 + dy, 1 + dx : padded.shape[2] - 1 + dx]
        boundary |= occ & (neighbor != center)
    return np.stack([occ, boundary], axis=-1).astype(np.float64)


def rasterize_morph(morph: MorphFeatures, config: ModelConfig) -> dict:
    if morph.n_zona_classes > config.n_zona_classes:
        raise DataError(
            f"morph declares {morph.n_zona_classes} zona classes, model expects "
            f"at most {config.n_zona_classes}")
    stage_onehot = (morph.stage[:, None] == np.arange(config.n_stage_classes)).astype(np.float64)
    if morph.stage.max(initial=0) >= config.n_stage_classes:
        raise DataError(f"stage id {int(morph.stage.max())} exceeds K_s={config.n_stage_classes}")
    return {
        "zona": one_hot_mask(morph.zona_sem, config.n_zona_classes),
        "blast": instance_channels(morph.blast_inst),
        "pronuc": instance_channels(morph.pronuc_inst),
        "scalars": np.concatenate([morph.frag.astype(np.float64)[:, None], stage_onehot], axis=1),
    }


def prepare_sample(sample: EmbryoSample, config: ModelConfig,
                   ehr_vec: np.ndarray | None = None,
                   interp_vec: np.ndarray | None = None,
                   max_frames_raw: int = MAX_FRAMES_DEFAULT,
                   stride: int = STRIDE_DEFAULT) -> ModelInputs:
    """Subsample frames, scale pixels to [0,1], rasterize masks, attach tabular."""
    idx = subsample_indices(sample.video.shape[0], max_frames_raw, stride)
    if len(idx) > config.max_frames:
        raise DataError(
            f"embryo {sample.embryo_id}: {len(idx)} frames after subsampling exceed "
            f"model capacity F={config.max_frames}")
    inputs = ModelInputs()
    if config.use_video:
        video = sample.video[idx].astype(np.float64) / 255.0
        if video.shape[1] != config.frame_size or video.shape[2] != config.frame_size:
            raise DataError(
                f"embryo {sample.embryo_id}: frame size {video.shape[1]}x{video.shape[2]} "
                f"does not match model frame_size {config.frame_size}")
        if video.shape[3] != config.channels:
            raise DataError(f"embryo {sample.embryo_id}: channel count mismatch")
        inputs.video = video
    if config.use_morph:
        if sample.morph is None:
            raise DataError(f"embryo {sample.embryo_id}: morphology channel required but absent")
        channels = rasterize_morph(sample.morph, config)
        inputs.zona = channels["zona"][idx]
        inputs.blast = channels["blast"][idx]
        inputs.pronuc = channels["pronuc"][idx]
        inputs.scalars = channels["scalars"][idx]
    if config.use_ehr:
        if ehr_vec is None:
            raise ContractError("use_ehr is set but no EHR vector was supplied")
        if ehr_vec.shape != (config.ehr_dim,):
            raise ContractError(f"EHR vector shape {ehr_vec.shape} != ({config.ehr_dim},)")
        inputs.ehr_vec = np.asarray(ehr_vec, dtype=np.float64)
    elif ehr_vec is not None:
        raise ContractError("EHR vector supplied but use_ehr is disabled")
    if config.use_interp:
        if interp_vec is None:
            raise ContractError("use_interp is set but no feature vector was supplied")
        if interp_vec.shape != (config.interp_dim,):
            raise ContractError(
                f"interpretable vector shape {interp_vec.shape} != ({config.interp_dim},)")
        inputs.interp_vec = np.asarray(interp_vec, dtype=np.float64)
    elif interp_vec is not None:
        raise ContractError("interpretable vector supplied but use_interp is disabled")
    return inputs
