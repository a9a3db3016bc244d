"""Deterministic mini-batch training with early stopping on validation loss."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..diffcore import ops
from ..errors import ConfigError, ContractError, DataError, NumericsError
from ..model import ModelConfig, init_params
from ..tabular import TabularConfig, init_tabular_params
from .optim import adam_step, init_adam_state
from .pipeline import (
    KINDS,
    Normalizers,
    SplitData,
    TrainedModel,
    build_examples,
    concat_scores,
    dataset_loss,
    fit_normalizers,
    forward_example,
)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    learning_rate: float = 1e-4
    huber_delta: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 60
    patience: int = 10
    min_delta: float = 1e-4
    seed: int = 0
    augment: bool = False
    snapshot: str = "best"

    def validate(self):
        if self.snapshot not in ("best", "final"):
            raise ConfigError("snapshot must be 'best' or 'final'")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        for name in ("learning_rate", "huber_delta", "adam_eps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be positive")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.min_delta < 0:
            raise ConfigError("min_delta must be nonnegative")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        cfg = cls(**obj)
        cfg.validate()
        return cfg


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    diverged: bool = False
    failure: str = ""

    @property
    def val_losses(self) -> list:
        return [r.val_loss for r in self.epochs]

    def validate(self):
        if self.epochs and self.best_epoch >= 0:
            best = self.epochs[self.best_epoch].val_loss
            if best != min(self.val_losses):
                raise ContractError("best_epoch does not hold the minimum validation loss")


def write_history(history: TrainHistory, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["epoch,train_loss,val_loss,seconds"]
    for r in history.epochs:
        lines.append(f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.seconds!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def early_stop_check(val_losses, patience: int, min_delta: float) -> bool:
    """True when no epoch in the last `patience` beat the best loss by > min_delta."""
    if not val_losses:
        raise ContractError("early_stop_check requires at least one recorded epoch")
    best = val_losses[0]
    best_epoch = 0
    for i, loss in enumerate(val_losses):
        if loss < best - min_delta:
            best = loss
            best_epoch = i
    return len(val_losses) - 1 - best_epoch >= patience


def _init_by_kind(kind: str, model_config, seed: int) -> dict:
    if kind == "multimodal":
        if not isinstance(model_config, ModelConfig):
            raise ConfigError("multimodal training requires a ModelConfig")
        return init_params(model_config, seed=seed)
    if not isinstance(model_config, TabularConfig):
        raise ConfigError("tabular training requires a TabularConfig")
    return init_tabular_params(model_config, seed=seed)


def _check_widths(kind: str, config, norms: Normalizers):
    if config.use_ehr:
        want = config.ehr_dim if kind == "multimodal" else config.ehr_width
        if norms.ehr.width != want:
            raise ConfigError(
                f"EHR width mismatch: normalizer {norms.ehr.width}, config {want}")
    if config.use_interp:
        want = config.interp_dim if kind == "multimodal" else config.interp_width
        if norms.interp.width != want:
            raise ConfigError(
                f"feature width mismatch: normalizer {norms.interp.width}, config {want}")


def train(model_kind: str, splits: SplitData, train_config: TrainConfig,
          model_config) -> tuple[TrainedModel, TrainHistory]:
    """Seeded shuffling, per-batch Huber + Adam, best-validation checkpointing.

    The returned model carries the weights of the lowest-validation-loss epoch,
    or of the last completed epoch when `snapshot` is "final" (fixed-budget
    ablation runs want end-of-training weights, not a loss-selected snapshot).
    Divergence (non-finite loss or gradient) stops training and returns the
    last good snapshot with `history.diverged` set.
    """
    if model_kind not in KINDS:
        raise ConfigError(f"unknown model kind {model_kind!r}")
    if model_kind == "multimodal" and not isinstance(model_config, ModelConfig):
        raise ConfigError("multimodal training requires a ModelConfig")
    if model_kind == "tabular" and not isinstance(model_config, TabularConfig):
        raise ConfigError("tabular training requires a TabularConfig")
    train_config.validate()
    model_config.validate()

    train_ids = {c.treatment_id for c in splits.train}
    val_ids = {c.treatment_id for c in splits.val}
    overlap = train_ids & val_ids
    if overlap:
        raise ContractError(f"splits share treatments: {sorted(overlap)[:3]}")

    norms = fit_normalizers(splits.schema, splits.train,
                            need_ehr=model_config.use_ehr,
                            need_interp=model_config.use_interp)
    _check_widths(model_kind, model_config, norms)
    train_examples = build_examples(splits.train, model_config, model_kind, norms)
    val_examples = build_examples(splits.val, model_config, model_kind, norms)
    if not train_examples:
        raise DataError("training split has no transferred embryos")
    if not val_examples:
        raise DataError("validation split has no transferred embryos")

    params = _init_by_kind(model_kind, model_config, train_config.seed)
    state = init_adam_state(params)
    rng = np.random.default_rng(train_config.seed)
    augment = train_config.augment and model_kind == "multimodal"

    history = TrainHistory()
    best = {name: p.data.copy() for name, p in params.items()}
    best_val = np.inf

    for epoch in range(train_config.max_epochs):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_examples))
        total = 0.0
        seen = 0
        failure = None
        for start in range(0, len(order), train_config.batch_size):
            batch = order[start:start + train_config.batch_size]
            preds = []
            targets = []
            for i in batch:
                example = train_examples[int(i)]
                if example.treatment_id not in train_ids:  # split-id audit
                    raise ContractError(
                        f"treatment {example.treatment_id} is not in the training split")
                preds.append(forward_example(example, params, model_config, model_kind,
                                             augment_rng=rng if augment else None))
                targets.append(example.target)
            pred_vec = concat_scores(preds)
            target_vec = np.asarray(targets, dtype=pred_vec.data.dtype)
            loss = ops.huber_loss(pred_vec, target_vec, delta=train_config.huber_delta)
            if not np.isfinite(loss.data):
                failure = f"non-finite training loss in epoch {epoch}"
                break
            for p in params.values():
                p.zero_grad()
            loss.backward()
            try:
                adam_step(params, state, train_config.learning_rate,
                          train_config.beta1, train_config.beta2, train_config.adam_eps)
            except NumericsError as err:
                failure = str(err)
                break
            total += float(loss.data) * len(batch)
            seen += len(batch)
        if failure is not None:
            history.diverged = True
            history.failure = failure
            break
        train_loss = total / seen
        val_loss = dataset_loss(params, model_config, model_kind, val_examples,
                                train_config.huber_delta)
        seconds = time.perf_counter() - t0
        history.epochs.append(EpochRecord(epoch, train_loss, val_loss, seconds))
        if not np.isfinite(val_loss):
            history.diverged = True
            history.failure = f"non-finite validation loss in epoch {epoch}"
            break
        if val_loss < best_val:
            best_val = val_loss
            best = {name: p.data.copy() for name, p in params.items()}
            history.best_epoch = epoch
        if early_stop_check(history.val_losses, train_config.patience,
                            train_config.min_delta):
            break

    history.validate()
    if train_config.snapshot == "final" and not history.diverged:
        best = {name: p.data.copy() for name, p in params.items()}
    model = TrainedModel(kind=model_kind, config=model_config, params=best,
                         normalizers=norms, seed=train_config.seed)
    return model, history
