"""Procedural rendering of synthetic embryo time-lapse media.

Each embryo is an annular shell (zona) around an interior disc in which
circular blastomeres double at the latent's division-event frames. Two
separate latent qualities drive the two sensor families on purpose:

* geometry quality -> division timing, fragmentation, cell symmetry. These
  show up crisply in the masks, the stage channel, and the interpretable
  features; in the raw video the cell boundaries are drawn at near-interior
  contrast so timing is hard to read off pixels.
* texture quality -> cytoplasm brightness inside blastomeres, a photometric
  cue visible only in the raw video (masks carry ids, not intensities).

Total blastomere area is held constant across divisions so mean frame
brightness does not leak the division schedule into the photometric channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data.types import InterpretableFeatures, MorphFeatures
from ..errors import ConfigError

ZONA_CLASSES = 3  # 0 background, 1 zona shell, 2 interior
FRAME_INTERVAL_MIN = 20.0

BG_GRAY = 40.0
ZONA_GRAY = 80.0
INTERIOR_GRAY = 120.0
CELL_BASE_GRAY = 135.0
CELL_TEXTURE_SPAN = 25.0  # brightness offset is span * (2 q_tex - 1)
CELL_EDGE_GRAY = 8.0
PRONUC_GRAY = 10.0
SPECKLE_GRAY = 25.0
SPECKLE_MAX = 28

INTERP_FEATURE_NAMES = (
    "t_first_division_min",
    "t_second_division_min",
    "symmetry_index",
    "zona_thickness_px",
    "mean_fragmentation",
)

# interior-relative placement: count -> (ring radius, cell radius, ring offset angle)
_PLACEMENTS = {
    1: (0.0, 0.60, 0.0),
    2: (0.50, 0.424, 0.0),
    4: (0.52, 0.30, math.pi / 4),
    8: (0.62, 0.212, math.pi / 8),
}


@dataclass(frozen=True)
class SynthLatent:
    """Hidden per-embryo state from which all media and outcomes derive."""

    quality: float  # overall, mean of the two components
    texture_quality: float  # routed to raw-video photometry
    geometry_quality: float  # routed to masks / stage / interpretable features
    event_frames: tuple[int, ...]  # strictly increasing division frames
    frag_level: float
    treatment_factor: float  # the owning treatment's EHR-derived factor
    orientation: float
    radius_multipliers: dict  # cell count -> per-cell radius multipliers
    zona_thickness: float

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.event_frames, self.event_frames[1:])):
            raise ConfigError(f"division events must strictly increase, got {self.event_frames}")


@dataclass(frozen=True)
class EmbryoGeometry:
    size: int
    cx: float
    cy: float
    r_outer: float
    r_inner: float


def geometry_for(size: int, zona_thickness: float) -> EmbryoGeometry:
    r_outer = 0.44 * size
    r_inner = r_outer - zona_thickness
    if r_inner < 0.22 * size:
        raise ConfigError(
            f"zona thickness {zona_thickness} leaves interior radius {r_inner:.1f} "
            f"below the renderable minimum for frame size {size}"
        )
    c = (size - 1) / 2.0
    return EmbryoGeometry(size, c, c, r_outer, r_inner)


def _radius_grid(size: int, cx: float, cy: float) -> np.ndarray:
    ys, xs = np.ogrid[:size, :size]
    return np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)


def _cell_centers(n: int, geo: EmbryoGeometry, orientation: float):
    ring, radius, offset = _PLACEMENTS[n]
    centers = []
    if n == 1:
        centers.append((geo.cx, geo.cy))
    else:
        for i in range(n):
            theta = orientation + offset + 2 * math.pi * i / n
            centers.append(
                (geo.cx + ring * geo.r_inner * math.cos(theta),
                 geo.cy + ring * geo.r_inner * math.sin(theta))
            )
    return centers, radius * geo.r_inner


def _n_cells_at(frame: int, events: tuple[int, ...]) -> int:
    return min(2 ** sum(1 for e in events if e <= frame), 8)


def stage_id_at(frame: int, events: tuple[int, ...]) -> int:
    """1 = one-cell; +1 per completed division."""
    return 1 + sum(1 for e in events if e <= frame)


def render_embryo_video(latent: SynthLatent, size: int, n_frames: int,
                        pixel_noise: float, n_stage_classes: int,
                        rng: np.random.Generator) -> tuple[np.ndarray, MorphFeatures]:
    """Render the uint8 video stack and its aligned morphology annotations."""
    geo = geometry_for(size, latent.zona_thickness)
    dist = _radius_grid(size, geo.cx, geo.cy)
    zona_ring = (dist >= geo.r_inner) & (dist < geo.r_outer)
    interior = dist < geo.r_inner

    zona_sem_base = np.zeros((size, size), dtype=np.uint8)
    zona_sem_base[zona_ring] = 1
    zona_sem_base[interior] = 2

    # epochs: cell layout only changes at division events
    epochs = [0] + [e for e in latent.event_frames if e < n_frames]
    epoch_video = []
    epoch_blast = []
    epoch_pronuc = []
    texture_offset = CELL_TEXTURE_SPAN * (2.0 * latent.texture_quality - 1.0)
    for k, start in enumerate(epochs):
        n = _n_cells_at(start, latent.event_frames)
        centers, base_radius = _cell_centers(n, geo, latent.orientation)
        mults = latent.radius_multipliers.get(n, (1.0,) * n)
        base = np.full((size, size), BG_GRAY)
        base[zona_ring] = ZONA_GRAY
        base[interior] = INTERIOR_GRAY
        blast = np.zeros((size, size), dtype=np.uint8)
        for i, (cx, cy) in enumerate(centers):
            r = base_radius * mults[i % len(mults)]
            if math.hypot(cx - geo.cx, cy - geo.cy) + r > geo.r_inner + 0.5:
                raise ConfigError("blastomere geometry exceeds the interior disc")
            d = np.sqrt((np.ogrid[:size, :size][1] - cx) ** 2 + (np.ogrid[:size, :size][0] - cy) ** 2)
            inside = d < r
            edge = inside & (d >= r - 1.0)
            base[inside] = CELL_BASE_GRAY + texture_offset
            base[edge] += CELL_EDGE_GRAY
            blast[inside] = i + 1
        pronuc = np.zeros((size, size), dtype=np.uint8)
        if k == 0:  # pronuclei visible only before the first division
            pr = 0.18 * geo.r_inner
            for j, sign in enumerate((-1.0, 1.0)):
                px = geo.cx + sign * 0.22 * geo.r_inner * math.cos(latent.orientation)
                py = geo.cy + sign * 0.22 * geo.r_inner * math.sin(latent.orientation)
                d = np.sqrt((np.ogrid[:size, :size][1] - px) ** 2 + (np.ogrid[:size, :size][0] - py) ** 2)
                base[d < pr] += PRONUC_GRAY
                pronuc[d < pr] = j + 1
        epoch_video.append(base)
        epoch_blast.append(blast)
        epoch_pronuc.append(pronuc)

    interior_ys, interior_xs = np.nonzero(interior)
    video = np.empty((n_frames, size, size, 1), dtype=np.uint8)
    blast_vol = np.empty((n_frames, size, size), dtype=np.uint8)
    pronuc_vol = np.empty((n_frames, size, size), dtype=np.uint8)
    zona_vol = np.broadcast_to(zona_sem_base, (n_frames, size, size)).copy()
    frag = np.empty(n_frames, dtype=np.float32)
    stage = np.empty(n_frames, dtype=np.uint8)
    for t in range(n_frames):
        k = sum(1 for e in epochs[1:] if e <= t)
        frame = epoch_video[k].copy()
        frag_t = float(np.clip(latent.frag_level + 0.02 * rng.standard_normal(), 0.0, 1.0))
        # even count keeps the bright/dark speckle split exact, so fragmentation
        # stays photometrically neutral in the mean
        n_speckles = 2 * int(round(frag_t * SPECKLE_MAX / 2.0))
        if n_speckles and len(interior_xs):
            picks = rng.integers(len(interior_xs), size=n_speckles)
            signs = np.where(np.arange(n_speckles) % 2 == 0, 1.0, -1.0)
            frame[interior_ys[picks], interior_xs[picks]] += SPECKLE_GRAY * signs
        if pixel_noise > 0:
            frame = frame + rng.normal(0.0, pixel_noise, frame.shape)
        video[t, :, :, 0] = np.clip(frame, 0, 255).round().astype(np.uint8)
        blast_vol[t] = epoch_blast[k]
        pronuc_vol[t] = epoch_pronuc[k]
        frag[t] = frag_t
        s = stage_id_at(t, latent.event_frames)
        if s >= n_stage_classes:
            raise ConfigError(f"stage id {s} exceeds the declared class count {n_stage_classes}")
        stage[t] = s
    morph = MorphFeatures(
        zona_sem=zona_vol,
        blast_inst=blast_vol,
        pronuc_inst=pronuc_vol,
        frag=frag,
        stage=stage,
        n_zona_classes=ZONA_CLASSES,
        n_stage_classes=n_stage_classes,
    )
    return video, morph


def measure_zona_thickness(zona_sem: np.ndarray) -> float:
    """Estimate the annulus width from one mask frame by radial ray sampling."""
    size = zona_sem.shape[-1]
    c = (size - 1) / 2.0
    step = 0.2
    radii = np.arange(0.0, 0.75 * size, step)
    widths = []
    for theta in np.linspace(0.0, 2 * math.pi, 64, endpoint=False):
        xs = np.clip(np.round(c + radii * math.cos(theta)).astype(int), 0, size - 1)
        ys = np.clip(np.round(c + radii * math.sin(theta)).astype(int), 0, size - 1)
        hit = zona_sem[ys, xs] == 1
        if hit.any():
            idx = np.nonzero(hit)[0]
            widths.append(radii[idx[-1]] - radii[idx[0]] + step)
    return float(np.mean(widths)) if widths else 0.0


def derive_interpretable(latent: SynthLatent, morph: MorphFeatures,
                         noise_level: float, rng: np.random.Generator,
                         n_frames: int) -> InterpretableFeatures:
    """Summarize one embryo into the tabular features a downstream model sees.

    Timings are event frame x 20 minutes; divisions never observed are
    censored at 1.25x the observation window. noise_level scales a fixed
    per-feature noise floor, so level 0 reproduces the latents exactly.
    """
    censored = 1.25 * n_frames * FRAME_INTERVAL_MIN
    observed = [e for e in latent.event_frames if e < n_frames]
    t_first = observed[0] * FRAME_INTERVAL_MIN if len(observed) >= 1 else censored
    t_second = observed[1] * FRAME_INTERVAL_MIN if len(observed) >= 2 else censored
    final_n = _n_cells_at(n_frames - 1, tuple(observed))
    mults = latent.radius_multipliers.get(final_n, (1.0,) * final_n)
    symmetry = float(min(mults) / max(mults))
    thickness = measure_zona_thickness(morph.zona_sem[0])
    mean_frag = float(morph.frag.mean())
    scales = {"timing": 40.0, "symmetry": 0.08, "thickness": 0.5, "frag": 0.05}
    values = {
        "t_first_division_min": t_first + noise_level * scales["timing"] * rng.standard_normal(),
        "t_second_division_min": t_second + noise_level * scales["timing"] * rng.standard_normal(),
        "symmetry_index": symmetry + noise_level * scales["symmetry"] * rng.standard_normal(),
        "zona_thickness_px": thickness + noise_level * scales["thickness"] * rng.standard_normal(),
        "mean_fragmentation": mean_frag + noise_level * scales["frag"] * rng.standard_normal(),
    }
    return InterpretableFeatures({k: float(v) for k, v in values.items()})
