"""Evaluation metrics for classification and regression."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass
class MetricsReport:
    task: str
    n: int
    accuracy: Optional[float] = None
    classes: list = field(default_factory=list)
    precision: dict = field(default_factory=dict)
    recall: dict = field(default_factory=dict)
    f1: dict = field(default_factory=dict)
    support: dict = field(default_factory=dict)
    macro_precision: Optional[float] = None
    macro_recall: Optional[float] = None
    macro_f1: Optional[float] = None
    confusion: list = field(default_factory=list)
    rmse: Optional[float] = None
    mae: Optional[float] = None

    def score(self, metric: str) -> float:
        value = getattr(self, metric, None)
        if value is None:
            raise MetricsError(f"metric '{metric}' is not defined for {self.task}")
        return value

    def to_dict(self) -> dict:
        if self.task == "regression":
            return {"task": self.task, "n": self.n, "rmse": self.rmse, "mae": self.mae}
        keys = [str(c) for c in self.classes]
        return {
            "task": self.task, "n": self.n, "accuracy": self.accuracy,
            "classes": keys,
            "precision": {str(k): v for k, v in self.precision.items()},
            "recall": {str(k): v for k, v in self.recall.items()},
            "f1": {str(k): v for k, v in self.f1.items()},
            "support": {str(k): v for k, v in self.support.items()},
            "macro_precision": self.macro_precision, "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1, "confusion": self.confusion,
        }


def _ratio(a: float, b: float) -> float:
    return a / b if b else 0.0


def evaluate(predictions: Sequence, truths: Sequence, task: str,
             classes: Optional[Sequence] = None) -> MetricsReport:
    """Compare predictions with ground truth.

    Classification: accuracy, per-class precision/recall/F1 (0/0 counts as 0),
    their unweighted macro means, and a confusion matrix with truth on rows.
    ``classes`` fixes the class order; by default it is the sorted union of
    both sequences.  Regression: RMSE and MAE over all values.
    """
    preds = list(predictions)
    truth = list(truths)
    if len(preds) != len(truth):
        raise MetricsError(f"length mismatch: {len(preds)} predictions, {len(truth)} truths")
    if not preds:
        raise MetricsError("cannot evaluate an empty prediction set")
    n = len(preds)
    if task == "regression":
        err = np.asarray(preds, dtype=float).ravel() - np.asarray(truth, dtype=float).ravel()
        return MetricsReport(task, n, rmse=math.sqrt(float(np.mean(err ** 2))),
                             mae=float(np.mean(np.abs(err))))
    if task != "classification":
        raise MetricsError(f"unknown task '{task}'")
    order = list(classes) if classes is not None else sorted(set(preds) | set(truth))
    pos = {c: i for i, c in enumerate(order)}
    k = len(order)
    cm = [[0] * k for _ in range(k)]
    for p, t in zip(preds, truth):
        if p not in pos or t not in pos:
            raise MetricsError(f"value outside the class list: {p!r} / {t!r}")
        cm[pos[t]][pos[p]] += 1
    correct = sum(cm[i][i] for i in range(k))
    rep = MetricsReport(task, n, accuracy=correct / n, classes=order, confusion=cm)
    for i, c in enumerate(order):
        tp = cm[i][i]
        fp = sum(cm[r][i] for r in range(k)) - tp
        fn = sum(cm[i]) - tp
        p = _ratio(tp, tp + fp)
        r = _ratio(tp, tp + fn)
        rep.precision[c] = p
        rep.recall[c] = r
        rep.f1[c] = _ratio(2 * p * r, p + r)
        rep.support[c] = sum(cm[i])
    rep.macro_precision = sum(rep.precision.values()) / k
    rep.macro_recall = sum(rep.recall.values()) / k
    rep.macro_f1 = sum(rep.f1.values()) / k
    return rep


def micro_recall(report: MetricsReport) -> float:
    cm = report.confusion
    tp = sum(cm[i][i] for i in range(len(cm)))
    return _ratio(tp, sum(map(sum, cm)))
