"""Domain data model: treatment cycles, embryo samples, and their schemas.

A treatment cycle owns one shared EHR record and outcome; its embryos carry
per-embryo video, optional per-frame morphology annotations, optional
per-embryo interpretable features, and a transfer flag. Only transferred
embryos have outcome labels (births over embryos transferred).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class EHRSchema:
    numeric: tuple[str, ...]
    categorical: tuple[tuple[str, tuple[str, ...]], ...]  # (name, vocabulary)

    @property
    def categorical_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.categorical)


@dataclass(frozen=True)
class DatasetSchema:
    ehr: EHRSchema
    interp: tuple[str, ...]


@dataclass
class EHRVector:
    numeric: dict[str, float]
    categorical: dict[str, str]

    def validate(self, schema: EHRSchema, owner: str):
        if set(self.numeric) != set(schema.numeric):
            raise DataError(f"treatment {owner}: EHR numeric fields do not match schema")
        if set(self.categorical) != set(schema.categorical_names):
            raise DataError(f"treatment {owner}: EHR categorical fields do not match schema")


@dataclass
class InterpretableFeatures:
    values: dict[str, float]

    def validate(self, names: tuple[str, ...], owner: str):
        if set(self.values) != set(names):
            raise DataError(f"embryo {owner}: interpretable features do not match schema")
        for k, v in self.values.items():
            if not np.isfinite(v):
                raise DataError(f"embryo {owner}: interpretable feature {k} is not finite")


@dataclass
class MorphFeatures:
    """Per-frame machine annotations: masks, fragmentation score, stage class."""

    zona_sem: np.ndarray  # (T, H, W) uint8 class ids in 0..n_zona_classes-1
    blast_inst: np.ndarray  # (T, H, W) uint8 instance ids, 0 = background
    pronuc_inst: np.ndarray  # (T, H, W) uint8 instance ids, 0 = background
    frag: np.ndarray  # (T,) float32 in [0, 1]
    stage: np.ndarray  # (T,) uint8 class ids in 0..n_stage_classes-1
    n_zona_classes: int
    n_stage_classes: int

    def validate(self, video_shape, owner: str):
        t, h, w, _ = video_shape
        for name, arr in (
            ("zona_sem", self.zona_sem),
            ("blast_inst", self.blast_inst),
            ("pronuc_inst", self.pronuc_inst),
        ):
            if arr.shape != (t, h, w):
                raise DataError(
                    f"embryo {owner}: morph volume {name} shape {arr.shape} "
                    f"does not match video frames ({t}, {h}, {w})"
                )
        if self.frag.shape != (t,) or self.stage.shape != (t,):
            raise DataError(f"embryo {owner}: per-frame morph scalars do not cover all frames")
        if self.zona_sem.max(initial=0) >= self.n_zona_classes:
            raise DataError(f"embryo {owner}: zona class id out of range")
        if self.stage.max(initial=0) >= self.n_stage_classes:
            raise DataError(f"embryo {owner}: stage class id out of range")
        if np.any(self.frag < 0) or np.any(self.frag > 1):
            raise DataError(f"embryo {owner}: fragmentation values outside [0, 1]")


@dataclass
class EmbryoSample:
    embryo_id: str
    video: np.ndarray  # (T, H, W, C) uint8 grayscale
    transferred: bool
    morph: MorphFeatures | None = None
    interp: InterpretableFeatures | None = None
    label: float | None = None  # n_births / n_transferred for transferred embryos

    @property
    def n_frames(self) -> int:
        return self.video.shape[0]


@dataclass
class TreatmentCycle:
    treatment_id: str
    ehr: EHRVector
    embryos: list[EmbryoSample]
    n_transferred: int
    n_births: int

    @property
    def successful(self) -> bool:
        return self.n_births >= 1

    def validate(self, schema: DatasetSchema):
        tid = self.treatment_id
        if self.n_births < 0 or self.n_transferred < 0:
            raise DataError(f"treatment {tid}: negative outcome counts")
        if self.n_births > self.n_transferred:
            raise DataError(f"treatment {tid}: n_births exceeds n_transferred")
        flagged = sum(1 for e in self.embryos if e.transferred)
        if self.n_transferred > flagged:
            raise DataError(
                f"treatment {tid}: n_transferred={self.n_transferred} exceeds "
                f"{flagged} transfer-flagged embryos"
            )
        self.ehr.validate(schema.ehr, tid)
        for e in self.embryos:
            if e.video.ndim != 4 or e.video.dtype != np.uint8:
                raise DataError(f"embryo {e.embryo_id}: video must be (T,H,W,C) uint8")
            if e.morph is not None:
                e.morph.validate(e.video.shape, e.embryo_id)
            if e.interp is not None:
                e.interp.validate(schema.interp, e.embryo_id)
            if e.transferred:
                expect = self.n_births / self.n_transferred
                if e.label is None or e.label != expect:
                    raise DataError(
                        f"embryo {e.embryo_id}: transferred label {e.label} "
                        f"!= n_births/n_transferred ({expect})"
                    )
            elif e.label is not None:
                raise DataError(f"embryo {e.embryo_id}: non-transferred embryo carries a label")


@dataclass
class Dataset:
    """Loaded corpus: schema plus treatment cycles, iterable as a sequence of cycles."""

    schema: DatasetSchema
    cycles: list[TreatmentCycle] = field(default_factory=list)

    def __iter__(self):
        return iter(self.cycles)

    def __len__(self):
        return len(self.cycles)

    def __getitem__(self, i):
        return self.cycles[i]

    def validate(self):
        seen = set()
        for c in self.cycles:
            if c.treatment_id in seen:
                raise DataError(f"duplicate treatment_id {c.treatment_id}")
            seen.add(c.treatment_id)
            c.validate(self.schema)
