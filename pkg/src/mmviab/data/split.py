"""Treatment-level stratified splitting.

Splits operate on whole treatment cycles so that a cycle's shared EHR record
never leaks across partitions. Success (any live birth) and failure strata are
partitioned separately with largest-remainder rounding, so each split
preserves the corpus success rate as closely as integer counts allow.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .types import TreatmentCycle


def _largest_remainder_counts(n: int, ratios) -> list[int]:
    total = float(sum(ratios))
    quotas = [n * r / total for r in ratios]
    counts = [int(q) for q in quotas]
    remainder = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def stratified_split(
    cycles, ratios=(8, 1, 1), seed: int = 0
) -> tuple[list[TreatmentCycle], list[TreatmentCycle], list[TreatmentCycle]]:
    """Partition cycles into len(ratios) splits, stratified by treatment success."""
    cycles = list(cycles)
    if len(cycles) < 10:
        raise ConfigError(f"stratified_split needs at least 10 treatments, got {len(cycles)}")
    if any(r <= 0 for r in ratios):
        raise ConfigError(f"split ratios must be positive, got {ratios}")
    n_splits = len(ratios)
    strata = {
        "success": [i for i, c in enumerate(cycles) if c.successful],
        "failure": [i for i, c in enumerate(cycles) if not c.successful],
    }
    rng = np.random.default_rng(seed)
    splits: list[list[TreatmentCycle]] = [[] for _ in range(n_splits)]
    for name in ("success", "failure"):  # fixed order keeps the draw deterministic
        members = strata[name]
        if not members:
            continue
        if len(members) < n_splits:
            raise ConfigError(
                f"{name} stratum has {len(members)} treatments, fewer than {n_splits} splits"
            )
        shuffled = [members[i] for i in rng.permutation(len(members))]
        counts = _largest_remainder_counts(len(members), ratios)
        start = 0
        for k, cnt in enumerate(counts):
            splits[k].extend(cycles[i] for i in shuffled[start : start + cnt])
            start += cnt
    train, val, test = splits
    return train, val, test
