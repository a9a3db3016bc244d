"""Example assembly and scoring shared by training, evaluation, and prediction.

The two model families consume the same per-embryo example records; the
multimodal path keeps raw samples so augmentation and frame preparation can
run per epoch, the tabular path only carries the normalized vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data.preprocess import (
    TabularNormalizer,
    augment_sample,
    fit_ehr_normalizer,
    fit_interp_normalizer,
)
from ..data.split import stratified_split
from ..data.types import Dataset, DatasetSchema, EmbryoSample
from ..diffcore import Tensor, no_grad, ops
from ..errors import ConfigError, ContractError, DataError
from ..model import (
    MODEL_MAGIC,
    TABULAR_MAGIC,
    ModelConfig,
    load_checkpoint,
    multimodal_forward,
    prepare_sample,
    save_checkpoint,
)
from ..tabular import TabularConfig, tabular_forward

KINDS = ("multimodal", "tabular")


@dataclass
class SplitData:
    """Treatment-level partition plus the schema the normalizers need."""

    schema: DatasetSchema
    train: list
    val: list
    test: list = field(default_factory=list)

    @classmethod
    def from_dataset(cls, dataset: Dataset, ratios=(8, 1, 1), seed: int = 0) -> "SplitData":
        parts = stratified_split(dataset.cycles, ratios=ratios, seed=seed)
        test = list(parts[2]) if len(parts) > 2 else []
        return cls(schema=dataset.schema, train=list(parts[0]), val=list(parts[1]),
                   test=test)


@dataclass
class Normalizers:
    ehr: TabularNormalizer | None = None
    interp: TabularNormalizer | None = None

    def to_dict(self) -> dict:
        return {
            "ehr": self.ehr.to_dict() if self.ehr is not None else None,
            "interp": self.interp.to_dict() if self.interp is not None else None,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Normalizers":
        return cls(
            ehr=TabularNormalizer.from_dict(obj["ehr"]) if obj.get("ehr") else None,
            interp=TabularNormalizer.from_dict(obj["interp"]) if obj.get("interp") else None,
        )


def fit_normalizers(schema: DatasetSchema, train_cycles, need_ehr: bool,
                    need_interp: bool) -> Normalizers:
    """Statistics come from the training split only; evaluation reuses them."""
    norms = Normalizers()
    if need_ehr:
        norms.ehr = fit_ehr_normalizer(schema.ehr, train_cycles)
    if need_interp:
        embryos = [e for c in train_cycles for e in c.embryos]
        norms.interp = fit_interp_normalizer(schema.interp, embryos)
    return norms


@dataclass
class TrainingExample:
    treatment_id: str
    embryo_id: str
    target: float | None
    sample: EmbryoSample | None = None  # raw frames, augmented per epoch
    ehr_vec: np.ndarray | None = None
    interp_vec: np.ndarray | None = None


def build_examples(cycles, config, kind: str, norms: Normalizers,
                   transferred_only: bool = True) -> list[TrainingExample]:
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    examples = []
    for cycle in cycles:
        ehr_vec = None
        if config.use_ehr:
            if norms.ehr is None:
                raise ContractError("EHR normalizer missing for an EHR-enabled model")
            ehr_vec = norms.ehr.transform(cycle.ehr)
        for embryo in cycle.embryos:
            if transferred_only and not embryo.transferred:
                continue
            interp_vec = None
            if config.use_interp:
                if norms.interp is None:
                    raise ContractError(
                        "feature normalizer missing for a feature-enabled model")
                if embryo.interp is None:
                    raise DataError(
                        f"embryo {embryo.embryo_id} has no interpretable features")
                interp_vec = norms.interp.transform(embryo.interp)
            examples.append(TrainingExample(
                treatment_id=cycle.treatment_id,
                embryo_id=embryo.embryo_id,
                target=embryo.label,
                sample=embryo if kind == "multimodal" else None,
                ehr_vec=ehr_vec,
                interp_vec=interp_vec,
            ))
    return examples


def forward_example(example: TrainingExample, params: dict, config, kind: str,
                    augment_rng: np.random.Generator | None = None) -> Tensor:
    if kind == "tabular":
        return tabular_forward(params, config, ehr_vec=example.ehr_vec,
                               interp_vec=example.interp_vec)
    sample = example.sample
    if augment_rng is not None:
        sample = augment_sample(sample, augment_rng)
    inputs = prepare_sample(sample, config, ehr_vec=example.ehr_vec,
                            interp_vec=example.interp_vec)
    return multimodal_forward(inputs, params, config)


def score_examples(params: dict, config, kind: str, examples) -> np.ndarray:
    """Raw viability scores, no augmentation, no graph construction."""
    scores = np.empty(len(examples), dtype=np.float64)
    with no_grad():
        for i, example in enumerate(examples):
            scores[i] = float(forward_example(example, params, config, kind).data)
    return scores


def dataset_loss(params: dict, config, kind: str, examples, delta: float) -> float:
    """Mean Huber loss over a fixed example list (validation objective)."""
    if not examples:
        raise DataError("cannot compute a loss over zero examples")
    scores = score_examples(params, config, kind, examples)
    targets = np.array([e.target for e in examples], dtype=np.float64)
    err = scores - targets
    quad = np.abs(err) <= delta
    losses = np.where(quad, 0.5 * err**2, delta * (np.abs(err) - 0.5 * delta))
    return float(losses.mean())


@dataclass
class TrainedModel:
    """Best-validation parameter snapshot plus everything needed to score."""

    kind: str
    config: object  # ModelConfig | TabularConfig
    params: dict  # name -> float32 ndarray
    normalizers: Normalizers
    seed: int

    def magic(self) -> bytes:
        return MODEL_MAGIC if self.kind == "multimodal" else TABULAR_MAGIC

    def tensors(self) -> dict:
        return {name: Tensor(np.asarray(arr)) for name, arr in self.params.items()}

    def save(self, path) -> Path:
        header = {
            "kind": self.kind,
            "model": self.config.to_dict(),
            "normalizers": self.normalizers.to_dict(),
        }
        return save_checkpoint(path, self.magic(), header, self.params, self.seed)

    @classmethod
    def load(cls, path) -> "TrainedModel":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"checkpoint {path} does not exist")
        with open(path, "rb") as f:
            magic = f.read(5)
        if magic not in (MODEL_MAGIC, TABULAR_MAGIC):
            raise DataError(f"{path} is not a recognized checkpoint (magic {magic!r})")
        header, arrays, seed = load_checkpoint(path, magic)
        kind = header.get("kind", "multimodal" if magic == MODEL_MAGIC else "tabular")
        config_cls = ModelConfig if kind == "multimodal" else TabularConfig
        return cls(
            kind=kind,
            config=config_cls.from_dict(header["model"]),
            params=arrays,
            normalizers=Normalizers.from_dict(header.get("normalizers", {})),
            seed=seed,
        )

    def score_cycles(self, cycles, transferred_only: bool = True) -> dict[str, float]:
        """embryo_id -> raw score for every (transferred) embryo in `cycles`."""
        examples = build_examples(cycles, self.config, self.kind, self.normalizers,
                                  transferred_only=transferred_only)
        scores = score_examples(self.tensors(), self.config, self.kind, examples)
        return {ex.embryo_id: float(s) for ex, s in zip(examples, scores)}


def concat_scores(pieces: list) -> Tensor:
    vectors = [ops.reshape(p, (1,)) for p in pieces]
    return ops.concat(vectors, axis=0) if len(vectors) > 1 else vectors[0]
