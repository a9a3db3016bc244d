"""Synthetic clinic cohorts with a planted, decomposable outcome signal.

Per treatment, a factor u in (0,1) drives the clinical record fields, and each
embryo carries independent texture / geometry qualities. Birth probability for
a transferred embryo is logistic(alpha * s + beta) where

    s = (w_video * q_tex + w_ehr * u + w_morph * q_geom) / (w_video + w_ehr + w_morph)

and beta is solved by bisection so the expected treatment-level success rate
matches the config. Setting a weight to zero makes the corresponding route
carry no outcome information, which is what the routing experiments rely on.

All randomness flows through per-treatment streams seeded as
(seed, treatment index), so generation order or parallelism cannot change the
output bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data.io import write_dataset
from ..data.types import (
    Dataset,
    DatasetSchema,
    EHRSchema,
    EHRVector,
    EmbryoSample,
    TreatmentCycle,
)
from ..errors import ConfigError
from .render import (
    FRAME_INTERVAL_MIN,
    INTERP_FEATURE_NAMES,
    SynthLatent,
    derive_interpretable,
    render_embryo_video,
)

EHR_NUMERIC = ("patient_age", "bmi", "amh_level", "n_oocytes", "years_infertility")
EHR_CATEGORICAL = (
    ("protocol", ("long_agonist", "antagonist", "natural")),
    ("sperm_source", ("partner", "donor")),
    ("prior_live_birth", ("no", "yes")),
)

MAX_TRANSFER = 5
_TRANSFER_COUNT_P = (0.30, 0.45, 0.20, 0.04, 0.01)  # P(k = 1..5) before capping


@dataclass(frozen=True)
class SynthConfig:
    n_treatments: int = 200
    embryos_low: int = 2
    embryos_high: int = 6
    frames_raw: int = 120
    frame_size: int = 32
    success_rate: float = 0.25
    w_video: float = 0.3
    w_ehr: float = 0.3
    w_morph: float = 0.4
    signal_gain: float = 16.0
    pixel_noise: float = 8.0
    feature_noise: float = 1.0
    proxy_noise: float = 0.35
    zona_thickness_px: float = 0.0  # 0 means round(0.10 * frame_size)
    n_stage_classes: int = 9
    seed: int = 0

    def validate(self):
        if self.n_treatments < 1:
            raise ConfigError("n_treatments must be positive")
        if not (1 <= self.embryos_low <= self.embryos_high):
            raise ConfigError("embryo count range must satisfy 1 <= low <= high")
        if self.frames_raw < 8:
            raise ConfigError("frames_raw must be at least 8")
        if self.frame_size < 16:
            raise ConfigError("frame_size must be at least 16")
        if not (0.0 < self.success_rate < 1.0):
            raise ConfigError("success_rate must lie strictly inside (0, 1)")
        for name in ("w_video", "w_ehr", "w_morph"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.w_video + self.w_ehr + self.w_morph <= 0:
            raise ConfigError("signal weights must not all be zero")
        if self.signal_gain <= 0:
            raise ConfigError("signal_gain must be positive")

    @property
    def zona_thickness(self) -> float:
        if self.zona_thickness_px > 0:
            return self.zona_thickness_px
        return float(max(2, round(0.10 * self.frame_size)))


@dataclass(frozen=True)
class EmbryoLatentRecord:
    embryo_id: str
    latent: SynthLatent
    transferred: bool


@dataclass(frozen=True)
class TreatmentLatentRecord:
    treatment_id: str
    factor: float
    ehr: EHRVector
    embryos: tuple[EmbryoLatentRecord, ...]
    n_transferred: int
    n_births: int


@dataclass(frozen=True)
class Cohort:
    config: SynthConfig
    beta: float
    treatments: tuple[TreatmentLatentRecord, ...] = field(default=())

    @property
    def realized_success_rate(self) -> float:
        return sum(1 for t in self.treatments if t.n_births >= 1) / len(self.treatments)


def _schema() -> DatasetSchema:
    return DatasetSchema(
        ehr=EHRSchema(numeric=EHR_NUMERIC, categorical=EHR_CATEGORICAL),
        interp=INTERP_FEATURE_NAMES,
    )


def _sample_ehr(u: float, rng: np.random.Generator) -> EHRVector:
    numeric = {
        "patient_age": float(np.clip(24.0 + 16.0 * (1 - u) + rng.normal(0, 1.5), 21.0, 45.0)),
        "bmi": float(np.clip(23.0 + rng.normal(0, 2.5), 17.0, 35.0)),
        "amh_level": float(np.clip(0.4 + 5.6 * u + rng.normal(0, 0.5), 0.1, 9.0)),
        "n_oocytes": float(np.clip(round(2 + 13 * u + rng.normal(0, 1.8)), 1, 25)),
        "years_infertility": float(np.clip(1.0 + 5.0 * (1 - u) + rng.normal(0, 1.0), 0.0, 12.0)),
    }
    categorical = {
        "protocol": ("long_agonist", "antagonist", "natural")[rng.integers(3)],
        "sperm_source": "partner" if rng.random() < 0.8 else "donor",
        "prior_live_birth": "yes" if rng.random() < 0.15 + 0.3 * u else "no",
    }
    return EHRVector(numeric=numeric, categorical=categorical)


def _sample_events(q_geom: float, frames_raw: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Division schedule: high geometry quality divides early and often."""
    frac = float(np.clip(0.22 + 0.40 * (1 - q_geom) + rng.normal(0, 0.02), 0.08, 0.75))
    events = [max(1, int(round(frac * frames_raw)))]
    for base in (0.18, 0.20):
        gap = float(np.clip(base + 0.25 * (1 - q_geom) + rng.normal(0, 0.02), 0.05, 0.6))
        nxt = events[-1] + max(1, int(round(gap * frames_raw)))
        if nxt >= int(0.95 * frames_raw):
            break
        events.append(nxt)
    return tuple(events)


def _sample_embryo_latent(u: float, cfg: SynthConfig, rng: np.random.Generator) -> SynthLatent:
    q_tex = float(rng.uniform(0.02, 0.98))
    q_geom = float(rng.uniform(0.02, 0.98))
    frag = float(np.clip(0.08 + 0.55 * (1 - q_geom) + rng.normal(0, 0.06), 0.0, 0.9))
    asym = 0.05 + 0.30 * (1 - q_geom)
    mults = {}
    for n in (1, 2, 4, 8):
        draws = 1.0 + asym * (rng.random(n) - 0.5)
        mults[n] = tuple(float(v) for v in draws)
    return SynthLatent(
        quality=(q_tex + q_geom) / 2.0,
        texture_quality=q_tex,
        geometry_quality=q_geom,
        event_frames=_sample_events(q_geom, cfg.frames_raw, rng),
        frag_level=frag,
        treatment_factor=u,
        orientation=float(rng.uniform(0, 2 * math.pi)),
        radius_multipliers=mults,
        zona_thickness=cfg.zona_thickness,
    )


def signal_score(latent: SynthLatent, cfg: SynthConfig) -> float:
    total = cfg.w_video + cfg.w_ehr + cfg.w_morph
    return (cfg.w_video * latent.texture_quality
            + cfg.w_ehr * latent.treatment_factor
            + cfg.w_morph * latent.geometry_quality) / total


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _solve_beta(transferred_scores: list[list[float]], alpha: float, target: float) -> float:
    """Bisection on beta so mean P(any birth per treatment) hits the target."""

    def expected_rate(beta: float) -> float:
        acc = 0.0
        for scores in transferred_scores:
            none = 1.0
            for s in scores:
                none *= 1.0 - _logistic(alpha * s + beta)
            acc += 1.0 - none
        return acc / len(transferred_scores)

    lo, hi = -40.0, 40.0
    if expected_rate(lo) > target or expected_rate(hi) < target:
        raise ConfigError("success_rate is unreachable for these signal weights")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if expected_rate(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sample_cohort(cfg: SynthConfig) -> Cohort:
    """Latent-only pass: treatments, embryos, transfers, and birth outcomes.

    No pixels are rendered, so this is cheap enough for calibration checks on
    cohorts far larger than anything worth writing to disk.
    """
    cfg.validate()
    drafts = []
    for idx in range(cfg.n_treatments):
        rng = np.random.default_rng([cfg.seed, idx])
        u = float(rng.uniform(0.02, 0.98))
        ehr = _sample_ehr(u, rng)
        n_embryos = int(rng.integers(cfg.embryos_low, cfg.embryos_high + 1))
        latents = [_sample_embryo_latent(u, cfg, rng) for _ in range(n_embryos)]
        proxies = [lat.geometry_quality + cfg.proxy_noise * rng.standard_normal() for lat in latents]
        # transfer counts skew low (single/double transfers dominate); a wide
        # uniform k would swamp the planted embryo signal with lottery noise
        k_draw = 1 + int(rng.choice(5, p=_TRANSFER_COUNT_P))
        k = min(k_draw, MAX_TRANSFER, n_embryos)
        order = np.argsort(np.asarray(proxies))[::-1]
        chosen = set(int(i) for i in order[:k])
        drafts.append((idx, u, ehr, latents, chosen, k))

    scores = [[signal_score(lat, cfg) for j, lat in enumerate(latents) if j in chosen]
              for _, _, _, latents, chosen, _ in drafts]
    beta = _solve_beta(scores, cfg.signal_gain, cfg.success_rate)

    treatments = []
    for idx, u, ehr, latents, chosen, k in drafts:
        birth_rng = np.random.default_rng([cfg.seed, idx, 7])
        n_births = 0
        embryos = []
        for j, lat in enumerate(latents):
            transferred = j in chosen
            if transferred:
                p = _logistic(cfg.signal_gain * signal_score(lat, cfg) + beta)
                if birth_rng.random() < p:
                    n_births += 1
            embryos.append(EmbryoLatentRecord(
                embryo_id=f"T{idx:05d}E{j}", latent=lat, transferred=transferred))
        treatments.append(TreatmentLatentRecord(
            treatment_id=f"T{idx:05d}", factor=u, ehr=ehr,
            embryos=tuple(embryos), n_transferred=k, n_births=n_births))
    return Cohort(config=cfg, beta=beta, treatments=tuple(treatments))


def build_dataset(cfg: SynthConfig, cohort: Cohort | None = None) -> Dataset:
    """Render media for a cohort and assemble the in-memory dataset."""
    if cohort is None:
        cohort = sample_cohort(cfg)
    cycles = []
    for idx, rec in enumerate(cohort.treatments):
        render_rng = np.random.default_rng([cfg.seed, idx, 11])
        feat_rng = np.random.default_rng([cfg.seed, idx, 13])
        samples = []
        for emb in rec.embryos:
            video, morph = render_embryo_video(
                emb.latent, cfg.frame_size, cfg.frames_raw,
                cfg.pixel_noise, cfg.n_stage_classes, render_rng)
            interp = derive_interpretable(
                emb.latent, morph, cfg.feature_noise, feat_rng, cfg.frames_raw)
            label = rec.n_births / rec.n_transferred if emb.transferred else None
            samples.append(EmbryoSample(
                embryo_id=emb.embryo_id, video=video, transferred=emb.transferred,
                morph=morph, interp=interp, label=label))
        cycles.append(TreatmentCycle(
            treatment_id=rec.treatment_id, ehr=rec.ehr, embryos=tuple(samples),
            n_transferred=rec.n_transferred, n_births=rec.n_births))
    ds = Dataset(schema=_schema(), cycles=tuple(cycles))
    ds.validate()
    return ds


def generate_dataset(cfg: SynthConfig, out_dir: str | Path) -> Path:
    """Sample, render, and write a full dataset tree. Returns the root path."""
    ds = build_dataset(cfg)
    return write_dataset(ds, Path(out_dir))
