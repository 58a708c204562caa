"""Classification metrics, ROC construction and threshold selection."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NoPositiveLabels, SingleClassDataset


def f1_score(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class RocCurve:
    thresholds: np.ndarray  # descending; first entry is +inf
    tpr: np.ndarray
    fpr: np.ndarray

    def points(self):
        return list(zip(self.thresholds.tolist(), self.tpr.tolist(), self.fpr.tolist()))

    def auc(self) -> float:
        return auc_trapezoid(self.fpr, self.tpr)


def roc_curve(scores, labels) -> RocCurve:
    """One point per distinct score (predict positive when score >= threshold).

    The leading point at threshold +inf is the (FPR, TPR) = (0, 0) endpoint; the
    lowest distinct score yields (1, 1).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClassDataset("ROC needs both classes")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y == 1)
    fp = np.cumsum(y == 0)
    # last index of each run of equal scores
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    thresholds = np.r_[np.inf, s[last]]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    return RocCurve(thresholds, tpr, fpr)


def auc_trapezoid(fpr, tpr) -> float:
    fpr = np.asarray(fpr, dtype=np.float64)
    tpr = np.asarray(tpr, dtype=np.float64)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def select_threshold(roc: RocCurve, lo: float = 0.0, hi: float = 1.0) -> float:
    """Threshold maximizing Youden's J = TPR - FPR.

    Every threshold inside the score gap below an optimal ROC point is equally
    optimal; adjacent optimal gaps merge into one interval. The midpoint of
    the interval is returned, and among several disjoint intervals the one
    whose midpoint is closest to 0.5 wins.
    """
    s = roc.thresholds[1:]  # distinct scores, descending
    lo = min(lo, float(s.min()))
    hi = max(hi, float(s.max()))
    j = roc.tpr - roc.fpr
    best = j.max()
    optimal = np.isclose(j, best, rtol=0.0, atol=1e-12)
    # point k covers thresholds in (upper_k, lower_k]: (s[k-1], s[k-2]] etc.
    bounds = np.r_[hi, s, lo]  # gap k spans (bounds[k+1], bounds[k]]
    intervals = []
    k = 0
    while k < len(j):
        if optimal[k]:
            start = k
            while k + 1 < len(j) and optimal[k + 1]:
                k += 1
            intervals.append((bounds[k + 1], bounds[start]))
        k += 1
    mids = [(a + b) / 2.0 for a, b in intervals]
    return float(min(mids, key=lambda m: (abs(m - 0.5), m)))


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    specificity: float
    auc: float
    mean_ce: float
    n_samples: int
    threshold: float

    def to_dict(self) -> dict:
        return {
            "precision": round(self.precision, 2),
            "recall": round(self.recall, 2),
            "f1": round(self.f1, 2),
            "specificity": round(self.specificity, 2),
            "auc": round(self.auc, 2),
            "mean_ce": round(self.mean_ce, 4),
            "n_samples": self.n_samples,
            "threshold": round(self.threshold, 6),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def table_row(self, phase: str = "Validation") -> str:
        d = self.to_dict()
        return (f"{phase:<11}{d['precision']:>10.2f}{d['recall']:>8.2f}{d['f1']:>10.2f}"
                f"{d['specificity']:>13.2f}{d['auc']:>8.2f}{d['mean_ce']:>10.4f}{d['n_samples']:>9d}")


TABLE_HEADER = (f"{'Phase':<11}{'Precision':>10}{'Recall':>8}{'F1-score':>10}"
                f"{'Specificity':>13}{'AUC':>8}{'Mean CE':>10}{'Samples':>9}")


def compute_metrics(probs, labels, threshold: float) -> MetricsReport:
    """Metric suite from (N, 2) probabilities; the positive class is 1."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    score = probs[:, 1]
    pred = score >= threshold
    pos = labels == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    if tp + fn == 0:
        raise NoPositiveLabels("recall is undefined without positive labels")
    precision = 100.0 if tp + fp == 0 else 100.0 * tp / (tp + fp)
    recall = 100.0 * tp / (tp + fn)
    specificity = 100.0 if tn + fp == 0 else 100.0 * tn / (tn + fp)
    auc = 100.0 * roc_curve(score, labels).auc()
    picked = probs[np.arange(len(labels)), labels]
    mean_ce = float(np.mean(-np.log(np.maximum(picked, 1e-12))))
    return MetricsReport(precision, recall, f1_score(precision, recall), specificity,
                         auc, mean_ce, len(labels), float(threshold))
