"""Segmentation scoring.

Two IoU flavors are kept deliberately separate, because published
numbers mix them up: ``mask_iou`` scores the foreground alone, while
``mean_iou_binary`` averages foreground and background IoU. Reports
always carry both so the distinction stays auditable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel counts of one prediction against one ground truth."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _as_binary(mask) -> np.ndarray:
    arr = np.asarray(getattr(mask, "values", mask))
    return arr.astype(bool)


def confusion(pred, gt) -> ConfusionCounts:
    p = _as_binary(pred)
    g = _as_binary(gt)
    if p.shape != g.shape:
        raise DimensionMismatch(f"prediction {p.shape} vs ground truth {g.shape}")
    return ConfusionCounts(
        tp=int(np.sum(p & g)),
        fp=int(np.sum(p & ~g)),
        fn=int(np.sum(~p & g)),
        tn=int(np.sum(~p & ~g)),
    )


def mask_iou(pred, gt) -> float:
    """Foreground-only IoU: tp / (tp + fp + fn).

    When both masks are empty there is nothing to disagree about, so the
    result is 1 by convention.
    """
    c = confusion(pred, gt)
    denom = c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else c.tp / denom


def mean_iou_binary(pred, gt) -> float:
    """Average of foreground IoU and background IoU.

    Background IoU is tn / (tn + fp + fn); empty denominators score 1 by
    the same vacuous-agreement convention as :func:`mask_iou`.
    """
    c = confusion(pred, gt)
    fg_denom = c.tp + c.fp + c.fn
    bg_denom = c.tn + c.fp + c.fn
    fg = 1.0 if fg_denom == 0 else c.tp / fg_denom
    bg = 1.0 if bg_denom == 0 else c.tn / bg_denom
    return 0.5 * (fg + bg)


def f_score(pred, gt, beta_sq: float = 0.3) -> float:
    """Weighted F-measure: (1 + b2) * P * R / (b2 * P + R).

    ``beta_sq`` is the squared beta weight; 1.0 recovers the balanced
    F1. Identically empty masks score 1; an undefined precision or
    recall counts as 0, and a zero denominator yields 0.
    """
    c = confusion(pred, gt)
    if c.tp + c.fp + c.fn == 0:
        return 1.0
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else 0.0
    denom = beta_sq * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + beta_sq) * precision * recall / denom


def average_precision(soft_pred, gt) -> float:
    """Area under the precision-recall curve of a pixel ranking.

    Pixels are sorted by predicted score, descending; precision is
    integrated over recall at every point where recall increases
    (all-points interpolation). Pixels with equal scores form one group
    and contribute the precision at the group boundary, so a constant
    prediction scores exactly the foreground prevalence. Invariant to
    strictly monotone transforms of the scores. Returns 0 when the
    ground truth has no positive pixels.
    """
    scores = np.asarray(getattr(soft_pred, "values", soft_pred), dtype=np.float64).ravel()
    positives = _as_binary(gt).ravel()
    if scores.shape != positives.shape:
        raise DimensionMismatch(f"prediction {scores.shape} vs ground truth {positives.shape}")
    n_pos = int(positives.sum())
    if n_pos == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positives[order].astype(np.int64)
    cum_tp = np.cumsum(sorted_pos)
    counts = np.arange(1, scores.size + 1)
    group_ends = np.nonzero(np.diff(sorted_scores))[0]
    group_ends = np.concatenate([group_ends, [scores.size - 1]])
    ap = 0.0
    prev_tp = 0
    for end in group_ends:
        tp_here = cum_tp[end] - prev_tp
        if tp_here:
            ap += tp_here * (cum_tp[end] / counts[end])
        prev_tp = cum_tp[end]
    return float(ap / n_pos)


@dataclass
class MetricReport:
    """Aggregated scores of one evaluation (binary, plus semantic when labeled)."""

    mask_iou: float = 0.0
    mean_iou: float = 0.0
    f_score: float = 0.0
    m_ap: float = 0.0
    per_sample: list = field(default_factory=list)
    per_class_iou: dict = field(default_factory=dict)
    class_mean_iou: float | None = None

    def as_dict(self) -> dict:
        out = {
            "mask_iou": self.mask_iou,
            "mean_iou": self.mean_iou,
            "f_score": self.f_score,
            "m_ap": self.m_ap,
        }
        if self.class_mean_iou is not None:
            out["class_mean_iou"] = self.class_mean_iou
            out["per_class_iou"] = dict(self.per_class_iou)
        return out


def score_sample(soft_pred, gt, beta_sq: float = 0.3, threshold: float = 0.5) -> dict:
    """All binary metrics of one sample: IoUs and F on the thresholded
    mask, average precision on the raw scores."""
    values = np.asarray(getattr(soft_pred, "values", soft_pred), dtype=np.float64)
    binary = values >= threshold
    return {
        "mask_iou": mask_iou(binary, gt),
        "mean_iou": mean_iou_binary(binary, gt),
        "f_score": f_score(binary, gt, beta_sq),
        "m_ap": average_precision(values, gt),
    }


class SemanticScorer:
    """Pooled per-class IoU over labeled samples.

    A prediction's pixels count toward its predicted class only, so a
    perfect mask under a wrong label scores zero for the true class.
    The class mean runs over classes present in ground truth or
    predictions.
    """

    def __init__(self, class_set=None):
        self.class_set = set(class_set) if class_set else None
        self._tp: dict[str, int] = {}
        self._fp: dict[str, int] = {}
        self._fn: dict[str, int] = {}

    def _check(self, label):
        if self.class_set is not None and label not in self.class_set:
            raise ValueError(f"label {label!r} not in the declared class set")

    def add(self, pred_mask, pred_label, gt_mask, gt_label) -> None:
        self._check(pred_label)
        self._check(gt_label)
        p = _as_binary(pred_mask)
        g = _as_binary(gt_mask)
        if p.shape != g.shape:
            raise DimensionMismatch(f"prediction {p.shape} vs ground truth {g.shape}")
        if pred_label == gt_label:
            c = confusion(p, g)
            self._bump(pred_label, c.tp, c.fp, c.fn)
        else:
            self._bump(pred_label, 0, int(p.sum()), 0)
            self._bump(gt_label, 0, 0, int(g.sum()))

    def _bump(self, label, tp, fp, fn):
        self._tp[label] = self._tp.get(label, 0) + tp
        self._fp[label] = self._fp.get(label, 0) + fp
        self._fn[label] = self._fn.get(label, 0) + fn

    def per_class_iou(self) -> dict[str, float]:
        out = {}
        for label in sorted(self._tp):
            denom = self._tp[label] + self._fp[label] + self._fn[label]
            out[label] = 1.0 if denom == 0 else self._tp[label] / denom
        return out

    def class_mean_iou(self) -> float:
        per_class = self.per_class_iou()
        if not per_class:
            return 0.0
        return float(np.mean(list(per_class.values())))


def semantic_report(pred_mask, pred_label, gt_mask, gt_label, class_set) -> MetricReport:
    """Score one labeled sample: binary metrics plus its per-class IoU."""
    scorer = SemanticScorer(class_set)
    scorer.add(pred_mask, pred_label, gt_mask, gt_label)
    binary = score_sample(np.asarray(_as_binary(pred_mask), dtype=np.float64), gt_mask)
    return MetricReport(
        mask_iou=binary["mask_iou"],
        mean_iou=binary["mean_iou"],
        f_score=binary["f_score"],
        m_ap=binary["m_ap"],
        per_sample=[{"pred_label": pred_label, "gt_label": gt_label}],
        per_class_iou=scorer.per_class_iou(),
        class_mean_iou=scorer.class_mean_iou(),
    )


def aggregate_samples(sample_scores: list[dict]) -> MetricReport:
    """Mean of each binary metric over per-sample scores."""
    report = MetricReport(per_sample=list(sample_scores))
    if not sample_scores:
        return report
    for name in ("mask_iou", "mean_iou", "f_score", "m_ap"):
        setattr(report, name, float(np.mean([s[name] for s in sample_scores])))
    return report
