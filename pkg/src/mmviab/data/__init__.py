"""Dataset domain model, on-disk formats, splitting, and preprocessing."""

from .io import load_dataset, read_morph, read_video, write_dataset, write_morph, write_video
from .preprocess import (
    TabularNormalizer,
    apply_frame_geometry,
    augment_sample,
    draw_augmentation,
    fit_ehr_normalizer,
    fit_interp_normalizer,
    normalize_ehr,
    normalize_interp,
    subsample_frames,
    subsample_indices,
)
from .split import stratified_split
from .types import (
    Dataset,
    DatasetSchema,
    EHRSchema,
    EHRVector,
    EmbryoSample,
    InterpretableFeatures,
    MorphFeatures,
    TreatmentCycle,
)

__all__ = [
    "Dataset",
    "DatasetSchema",
    "EHRSchema",
    "EHRVector",
    "EmbryoSample",
    "InterpretableFeatures",
    "MorphFeatures",
    "TabularNormalizer",
    "TreatmentCycle",
    "apply_frame_geometry",
    "augment_sample",
    "draw_augmentation",
    "fit_ehr_normalizer",
    "fit_interp_normalizer",
    "load_dataset",
    "normalize_ehr",
    "normalize_interp",
    "read_morph",
    "read_video",
    "stratified_split",
    "subsample_frames",
    "subsample_indices",
    "write_dataset",
    "write_morph",
    "write_video",
]
