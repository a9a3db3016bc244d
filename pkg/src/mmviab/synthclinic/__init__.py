"""Synthetic clinic generator with planted, route-separable outcome signal."""

from .generate import (
    EHR_CATEGORICAL,
    EHR_NUMERIC,
    MAX_TRANSFER,
    Cohort,
    EmbryoLatentRecord,
    SynthConfig,
    TreatmentLatentRecord,
    build_dataset,
    generate_dataset,
    sample_cohort,
    signal_score,
)
from .render import (
    FRAME_INTERVAL_MIN,
    INTERP_FEATURE_NAMES,
    ZONA_CLASSES,
    SynthLatent,
    derive_interpretable,
    measure_zona_thickness,
    render_embryo_video,
    stage_id_at,
)

__all__ = [
    "EHR_CATEGORICAL",
    "EHR_NUMERIC",
    "MAX_TRANSFER",
    "Cohort",
    "EmbryoLatentRecord",
    "SynthConfig",
    "TreatmentLatentRecord",
    "build_dataset",
    "generate_dataset",
    "sample_cohort",
    "signal_score",
    "FRAME_INTERVAL_MIN",
    "INTERP_FEATURE_NAMES",
    "ZONA_CLASSES",
    "SynthLatent",
    "derive_interpretable",
    "measure_zona_thickness",
    "render_embryo_video",
    "stage_id_at",
]
