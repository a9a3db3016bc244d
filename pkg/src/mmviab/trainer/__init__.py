"""Deterministic training: Adam, early stopping, best-validation checkpoints."""

from .loop import (
    EpochRecord,
    TrainConfig,
    TrainHistory,
    early_stop_check,
    train,
    write_history,
)
from .optim import AdamState, adam_step, init_adam_state
from .pipeline import (
    Normalizers,
    SplitData,
    TrainedModel,
    TrainingExample,
    build_examples,
    dataset_loss,
    fit_normalizers,
    forward_example,
    score_examples,
)

__all__ = [
    "EpochRecord",
    "TrainConfig",
    "TrainHistory",
    "early_stop_check",
    "train",
    "write_history",
    "AdamState",
    "adam_step",
    "init_adam_state",
    "Normalizers",
    "SplitData",
    "TrainedModel",
    "TrainingExample",
    "build_examples",
    "dataset_loss",
    "fit_normalizers",
    "forward_example",
    "score_examples",
]
