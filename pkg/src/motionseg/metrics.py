"""Pixel-level evaluation: confusion counting with ignore semantics and
the derived metrics (rates, precision, PWC, F-measure, PR curves).

Counting pools pixels within a scene (micro-average); across scenes the
aggregation is a macro-average per category, then a mean of category
means for the overall figure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .labelspace import Label

UNDEFINED = float("nan")

DEFAULT_THRESHOLD_GRID = [round(0.1 * i, 1) for i in range(10)]


@dataclass
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.tn + other.tn,
            self.fp + other.fp, self.fn + other.fn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class MetricReport:
    tpr: float
    tnr: float
    fpr: float
    fnr: float
    precision: float
    recall: float
    pwc: float
    f_measure: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def count(pred: np.ndarray, gt: np.ndarray) -> ConfusionCounts:
    """Cross-tabulate a binary motion mask against a label mask.

    IGNORE pixels are excluded entirely; predictions there carry no weight.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    keep = gt != Label.IGNORE
    p = pred[keep].astype(bool)
    actual = gt[keep] == Label.MOTION
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & actual)),
        tn=int(np.count_nonzero(~p & ~actual)),
        fp=int(np.count_nonzero(p & ~actual)),
        fn=int(np.count_nonzero(~p & actual)),
    )


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else UNDEFINED


def derive(c: ConfusionCounts) -> MetricReport:
    """All eight metrics; 0/0 denominators yield UNDEFINED (NaN)."""
    tpr = _ratio(c.tp, c.tp + c.fn)
    tnr = _ratio(c.tn, c.tn + c.fp)
    fpr = _ratio(c.fp, c.tn + c.fp)
    fnr = _ratio(c.fn, c.tp + c.fn)
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = tpr
    pwc = _ratio(100.0 * (c.fp + c.fn), c.total)
    if math.isnan(precision) or math.isnan(recall) or precision + recall == 0:
        f = UNDEFINED
    else:
        f = 2.0 * precision * recall / (precision + recall)
    return MetricReport(tpr, tnr, fpr, fnr, precision, recall, pwc, f)


def f_measure(c: ConfusionCounts) -> float:
    return derive(c).f_measure


def pooled_counts(preds, gts, threshold: float) -> ConfusionCounts:
    """Confusion counts over a set of probability masks at one threshold."""
    total = ConfusionCounts()
    for pred, gt in zip(preds, gts):
        total = total + count(np.asarray(pred) >= threshold, gt)
    return total


def pr_curve(preds, gts, grid=None):
    """Pooled (threshold, precision, recall) points plus trapezoidal AUC.

    Returns (points, auc) where points is a list of tuples. Points with an
    undefined precision are kept in the list but skipped for the AUC.
    """
    if grid is None:
        grid = DEFAULT_THRESHOLD_GRID
    preds = list(preds)
    gts = list(gts)
    if not preds:
        raise ValueError("pr_curve needs at least one prediction")
    points = []
    for t in grid:
        rep = derive(pooled_counts(preds, gts, t))
        points.append((t, rep.precision, rep.recall))
    defined = [(r, p) for _, p, r in points if not (math.isnan(p) or math.isnan(r))]
    defined.sort()
    if len(defined) >= 2:
        rs = np.array([r for r, _ in defined])
        ps = np.array([p for _, p in defined])
        auc = float(np.trapezoid(ps, rs))
    else:
        auc = UNDEFINED
    return points, auc


def aggregate(rows):
    """Two-level mean over per-scene F-measures.

    `rows` is an iterable of (category, scene, MetricReport). Returns a dict
    with per-category means, the overall mean of category means, and the
    number of undefined per-scene entries skipped.
    """
    by_category: dict[str, list[float]] = {}
    undefined_count = 0
    for category, _scene, report in rows:
        f = report.f_measure
        if math.isnan(f):
            undefined_count += 1
            continue
        by_category.setdefault(category, []).append(f)
    category_means = {c: float(np.mean(v)) for c, v in sorted(by_category.items())}
    overall = float(np.mean(list(category_means.values()))) if category_means else UNDEFINED
    return {
        "per_category": category_means,
        "overall": overall,
        "undefined_count": undefined_count,
    }
