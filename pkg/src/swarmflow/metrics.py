"""Evaluation metrics for binary flow classification.

The attack class is the positive class throughout: a false positive is a
normal flow raised as an alarm. AUC is computed from rank statistics (the
probability that a random attack record outranks a random normal record,
ties counted one half), which is the quantity the hyperparameter search
maximizes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise DataError(f"{name} must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class MetricsReport:
    """The six ratio metrics plus (optionally) AUC, with their inputs.

    Ratios with a zero denominator are reported as 0.0 and listed in
    `undefined` instead of raising, so degenerate desk-scale runs still
    produce a complete report.
    """

    accuracy: float
    precision: float
    recall: float
    fpr: float
    fnr: float
    f_measure: float
    auc: float | None
    threshold: float
    confusion: ConfusionMatrix
    undefined: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "fpr": self.fpr,
            "fnr": self.fnr,
            "f_measure": self.f_measure,
            "auc": self.auc,
            "threshold": self.threshold,
            "confusion": {
                "tp": self.confusion.tp,
                "tn": self.confusion.tn,
                "fp": self.confusion.fp,
                "fn": self.confusion.fn,
            },
            "undefined": list(self.undefined),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, obj: dict) -> "MetricsReport":
        cm = obj["confusion"]
        return cls(
            accuracy=obj["accuracy"],
            precision=obj["precision"],
            recall=obj["recall"],
            fpr=obj["fpr"],
            fnr=obj["fnr"],
            f_measure=obj["f_measure"],
            auc=obj.get("auc"),
            threshold=obj["threshold"],
            confusion=ConfusionMatrix(tp=cm["tp"], tn=cm["tn"], fp=cm["fp"], fn=cm["fn"]),
            undefined=tuple(obj.get("undefined", ())),
        )


def confusion(scores, labels, threshold: float = 0.5) -> ConfusionMatrix:
    """Count outcomes at a decision threshold; score >= threshold predicts attack."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise DataError(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    if scores.size == 0:
        raise DataError("cannot build a confusion matrix from empty input")
    predicted = scores >= threshold
    actual = labels == 1
    return ConfusionMatrix(
        tp=int(np.sum(predicted & actual)),
        tn=int(np.sum(~predicted & ~actual)),
        fp=int(np.sum(predicted & ~actual)),
        fn=int(np.sum(~predicted & actual)),
    )


def _ratio(num: int, den: int, name: str, undefined: list[str]) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def compute_metrics(
    cm: ConfusionMatrix, threshold: float = 0.5, auc: float | None = None
) -> MetricsReport:
    """Derive the six ratio metrics from confusion counts."""
    if cm.total == 0:
        raise DataError("confusion matrix has no observations")
    undefined: list[str] = []
    return MetricsReport(
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision=_ratio(cm.tp, cm.tp + cm.fp, "precision", undefined),
        recall=_ratio(cm.tp, cm.tp + cm.fn, "recall", undefined),
        fpr=_ratio(cm.fp, cm.fp + cm.tn, "fpr", undefined),
        fnr=_ratio(cm.fn, cm.fn + cm.tp, "fnr", undefined),
        f_measure=_ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, "f_measure", undefined),
        auc=auc,
        threshold=threshold,
        confusion=cm,
        undefined=tuple(undefined),
    )


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the group average, via sort and search."""
    order = np.argsort(values, kind="mergesort")
    ordered = values[order]
    left = np.searchsorted(ordered, ordered, side="left")
    right = np.searchsorted(ordered, ordered, side="right")
    avg = (left + right + 1) / 2.0
    ranks = np.empty(values.shape[0], dtype=np.float64)
    ranks[order] = avg
    return ranks


def roc_auc(scores, labels) -> float:
    """Probability a random attack score exceeds a random normal score (ties = 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise DataError(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(labels.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs at least one attack and one normal record")
    ranks = _average_ranks(scores)
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def calibrate_threshold(
    scores, labels, weight_normal: float = 1.0, weight_attack: float = 1.0
) -> float:
    """Decision threshold maximizing class-weighted accuracy on `scores`.

    Weighted correct count = weight_attack * TP + weight_normal * TN,
    evaluated at every observed score (the >= boundary policy makes those
    the only distinct operating points). With the training class weights
    this picks the operating point the weighted loss was aiming at, which a
    ranking-quality objective alone leaves unpinned. Ties resolve to the
    lowest qualifying threshold; the all-normal classifier (threshold above
    every score) is never selected.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise DataError(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    if scores.size == 0:
        raise DataError("cannot calibrate a threshold on empty input")
    if weight_normal <= 0 or weight_attack <= 0:
        raise ConfigError("calibration weights must be strictly positive")
    candidates = np.unique(scores)
    attack = np.sort(scores[labels == 1])
    normal = np.sort(scores[labels == 0])
    tp = attack.size - np.searchsorted(attack, candidates, side="left")
    fp = normal.size - np.searchsorted(normal, candidates, side="left")
    tn = normal.size - fp
    value = weight_attack * tp + weight_normal * tn
    return float(candidates[int(np.argmax(value))])
