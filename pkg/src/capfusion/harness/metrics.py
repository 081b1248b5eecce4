"""Confusion-matrix metrics: accuracy, macro F1 and walking recall."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class EmptyEvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class MetricTriplet:
    accuracy: float
    macro_f1: float
    walking_recall: float | None  # None when there is nothing to measure

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1, "walking_recall": self.walking_recall}


def confusion_matrix(y_true, y_pred, num_labels: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"{y_true.shape} true labels vs {y_pred.shape} predictions")
    for name, y in (("true", y_true), ("predicted", y_pred)):
        if y.size and (y.min() < 0 or y.max() >= num_labels):
            raise ValueError(f"{name} label outside [0, {num_labels})")
    cm = np.zeros((num_labels, num_labels), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def accuracy(cm) -> float:
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise EmptyEvaluationError("empty confusion matrix")
    return float(np.trace(cm) / total)


def per_class_f1(cm) -> np.ndarray:
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    # 2PR/(P+R) == 2TP/(2TP+FP+FN); undefined (no support, no predictions) counts as 0
    denom = 2 * tp + (cm.sum(axis=0) - tp) + (cm.sum(axis=1) - tp)
    return np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)


def macro_f1(cm, warn: bool = True) -> float:
    cm = np.asarray(cm)
    absent = np.flatnonzero((cm.sum(axis=0) == 0) & (cm.sum(axis=1) == 0))
    if warn and len(absent):
        warnings.warn(f"labels {absent.tolist()} absent from truth and predictions; scored F1 = 0",
                      RuntimeWarning, stacklevel=2)
    return float(per_class_f1(cm).mean())


def walking_recall(cm, walking_id: int | None) -> float | None:
    if walking_id is None:
        return None
    row = np.asarray(cm)[walking_id]
    if row.sum() == 0:
        return None
    return float(row[walking_id] / row.sum())


def metrics_from_confusion(cm, walking_id: int | None, warn: bool = True) -> MetricTriplet:
    return MetricTriplet(accuracy(cm), macro_f1(cm, warn=warn), walking_recall(cm, walking_id))


def evaluate(model, test_ds, scheme, warn: bool = True) -> tuple[MetricTriplet, np.ndarray]:
    """Argmax predictions on ``test_ds`` (np.argmax keeps the lowest index on ties)."""
    if len(test_ds) == 0:
        raise EmptyEvaluationError("cannot evaluate on an empty test set")
    pred = np.argmax(model.predict_logits(test_ds.X), axis=1)
    cm = confusion_matrix(test_ds.y, pred, scheme.num_labels)
    return metrics_from_confusion(cm, scheme.walking_id, warn=warn), cm
