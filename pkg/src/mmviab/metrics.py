"""Embryo- and treatment-level AUCROC / F1 evaluation.

Embryo scenario: every transferred embryo of a treatment with at least one
live birth is labeled 1 (the individual outcome is unobserved), all other
transferred embryos 0; AUC and F1 at threshold 0.15 are computed on raw
scores.  Treatment scenario: per-treatment sum of clamped-to-[0,1] scores
against the n_births >= 1 label, F1 at threshold 0.5.  Clamping is applied
only where sums must live on the [0, n] scale the 0.5 threshold presumes;
AUC is rank-based, so raw scores avoid manufactured ties.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data.types import TreatmentCycle
from .errors import DataError, ShapeError, UndefinedMetricError

EMBRYO_F1_THRESHOLD = 0.15
TREATMENT_F1_THRESHOLD = 0.5


def _as_score_label_arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.ndim != 1 or y.shape != s.shape:
        raise ShapeError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    if s.size == 0:
        raise UndefinedMetricError("metric undefined on empty input")
    if not np.isfinite(s).all():
        raise UndefinedMetricError("scores contain non-finite values")
    uniq = set(np.unique(y).tolist())
    if not uniq <= {0, 1}:
        raise UndefinedMetricError(f"labels must be binary 0/1, got values {sorted(uniq)}")
    return s, y.astype(np.int64)


def auc_roc(scores, labels) -> float:
    """Mann-Whitney AUC with midrank tie handling."""
    s, y = _as_score_label_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC undefined with a single class ({n_pos} positives, {n_neg} negatives)")
    order = np.argsort(s, kind="stable")
    sorted_s = s[order]
    ranks = np.empty(s.size, dtype=np.float64)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def f1_at_threshold(scores, labels, threshold: float) -> float:
    """F1 with prediction = (score >= threshold); degenerate cases give 0."""
    s, y = _as_score_label_arrays(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def roc_points(scores, labels) -> list[tuple[float, float, float]]:
    """(fpr, tpr, threshold) triples from +inf down to the lowest score.

    Points are monotone nondecreasing in both coordinates, starting at
    (0, 0) and ending at (1, 1); tied scores collapse into one point, so
    the trapezoidal area under the curve equals the Mann-Whitney AUC.
    """
    s, y = _as_score_label_arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"ROC undefined with a single class ({n_pos} positives, {n_neg} negatives)")
    order = np.argsort(-s, kind="stable")
    s_desc, y_desc = s[order], y[order]
    points = [(0.0, 0.0, float("inf"))]
    tp = fp = 0
    i = 0
    while i < s_desc.size:
        j = i
        while j + 1 < s_desc.size and s_desc[j + 1] == s_desc[i]:
            j += 1
        tp += int(y_desc[i:j + 1].sum())
        fp += (j - i + 1) - int(y_desc[i:j + 1].sum())
        points.append((fp / n_neg, tp / n_pos, float(s_desc[i])))
        i = j + 1
    return points


def trapezoid_area(points: Sequence[tuple[float, float, float]]) -> float:
    area = 0.0
    for (x0, y0, _), (x1, y1, _) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, float(x)))


def evaluate_embryo(predictions: dict[str, float],
                    cycles: Sequence[TreatmentCycle]):
    """(auc, f1, roc) over transferred embryos; success marks all of a cycle's."""
    scores, labels = [], []
    for cycle in cycles:
        label = 1 if cycle.successful else 0
        for embryo in cycle.embryos:
            if not embryo.transferred:
                continue
            if embryo.embryo_id not in predictions:
                raise DataError(f"no prediction for transferred embryo {embryo.embryo_id}")
            scores.append(float(predictions[embryo.embryo_id]))
            labels.append(label)
    auc = auc_roc(scores, labels)
    f1 = f1_at_threshold(scores, labels, EMBRYO_F1_THRESHOLD)
    return auc, f1, roc_points(scores, labels)


def evaluate_treatment(predictions: dict[str, float],
                       cycles: Sequence[TreatmentCycle]):
    """(auc, f1, roc) on per-treatment sums of clamped scores."""
    sums, labels = [], []
    for cycle in cycles:
        transferred = [e for e in cycle.embryos if e.transferred]
        if not transferred:
            warnings.warn(f"treatment {cycle.treatment_id} has no transferred embryos; "
                          "excluded from treatment-level evaluation")
            continue
        clamped = []
        for embryo in transferred:
            if embryo.embryo_id not in predictions:
                raise DataError(f"no prediction for transferred embryo {embryo.embryo_id}")
            clamped.append(_clamp01(predictions[embryo.embryo_id]))
        # fsum: the sum must not depend on embryo order within the cycle
        sums.append(math.fsum(clamped))
        labels.append(1 if cycle.successful else 0)
    auc = auc_roc(sums, labels)
    f1 = f1_at_threshold(sums, labels, TREATMENT_F1_THRESHOLD)
    return auc, f1, roc_points(sums, labels)


@dataclass
class MetricsReport:
    embryo_auc: float
    embryo_f1: float
    treatment_auc: float
    treatment_f1: float
    n_embryos: int
    n_treatments: int
    embryo_roc: list = field(default_factory=list)
    treatment_roc: list = field(default_factory=list)

    def validate(self):
        for name in ("embryo_auc", "embryo_f1", "treatment_auc", "treatment_f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name} {v} outside [0, 1]")
        for name in ("embryo_roc", "treatment_roc"):
            pts = getattr(self, name)
            if pts and (pts[0][:2] != (0.0, 0.0) or pts[-1][:2] != (1.0, 1.0)):
                raise DataError(f"{name} must run from (0,0) to (1,1)")
        if self.embryo_roc:
            if abs(trapezoid_area(self.embryo_roc) - self.embryo_auc) > 1e-9:
                raise DataError("embryo AUC does not match its ROC curve area")
        if self.treatment_roc:
            if abs(trapezoid_area(self.treatment_roc) - self.treatment_auc) > 1e-9:
                raise DataError("treatment AUC does not match its ROC curve area")


def compute_report(predictions: dict[str, float],
                   cycles: Sequence[TreatmentCycle]) -> MetricsReport:
    embryo_auc, embryo_f1, embryo_roc = evaluate_embryo(predictions, cycles)
    treatment_auc, treatment_f1, treatment_roc = evaluate_treatment(predictions, cycles)
    n_embryos = sum(1 for c in cycles for e in c.embryos if e.transferred)
    n_treatments = sum(1 for c in cycles if any(e.transferred for e in c.embryos))
    report = MetricsReport(embryo_auc=embryo_auc, embryo_f1=embryo_f1,
                           treatment_auc=treatment_auc, treatment_f1=treatment_f1,
                           n_embryos=n_embryos, n_treatments=n_treatments,
                           embryo_roc=embryo_roc, treatment_roc=treatment_roc)
    report.validate()
    return report


def write_report(report: MetricsReport, out_dir) -> dict[str, Path]:
    """metrics.json, roc.csv, and a fixed-layout summary table; byte-stable."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    payload = {
        "embryo_auc": report.embryo_auc,
        "embryo_f1": report.embryo_f1,
        "treatment_auc": report.treatment_auc,
        "treatment_f1": report.treatment_f1,
        "n_embryos": report.n_embryos,
        "n_treatments": report.n_treatments,
    }
    json_path = out / "metrics.json"
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    roc_path = out / "roc.csv"
    rows = ["scenario,fpr,tpr,threshold"]
    for scenario, points in (("embryo", report.embryo_roc),
                             ("treatment", report.treatment_roc)):
        for fpr, tpr, thr in points:
            rows.append(f"{scenario},{fpr!r},{tpr!r},{thr!r}")
    roc_path.write_text("\n".join(rows) + "\n")

    table_path = out / "table.txt"
    table_path.write_text(
        "Scenario   AUCROC  F-1\n"
        f"Embryo     {report.embryo_auc:.4f}  {report.embryo_f1:.4f}\n"
        f"Treatment  {report.treatment_auc:.4f}  {report.treatment_f1:.4f}\n")

    return {"metrics": json_path, "roc": roc_path, "table": table_path}
