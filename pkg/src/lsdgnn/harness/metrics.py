"""Classification metrics: accuracy, weighted and macro F1, confusion matrix."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from lsdgnn.errors import ContractError, DataError


@dataclass
class EvalReport:
    weighted_f1: float
    macro_f1: float
    accuracy: float
    per_class_f1: dict[int, float]
    confusion: np.ndarray  # [true, predicted] counts, K x K

    @property
    def support(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "weighted_f1": self.weighted_f1,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "per_class_f1": {str(k): v for k, v in self.per_class_f1.items()},
            "confusion": self.confusion.tolist(),
        }


def confusion_matrix(labels: Sequence[int], predictions: Sequence[int], K: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predictions, dtype=np.int64).reshape(-1)
    if y.shape != p.shape:
        raise ContractError(f"{y.size} labels but {p.size} predictions")
    if K < 1:
        raise ContractError(f"K must be >= 1, got {K}")
    for name, v in (("label", y), ("prediction", p)):
        bad = np.flatnonzero((v < 0) | (v >= K))
        if bad.size:
            raise DataError(f"{name} {v[bad[0]]} at position {bad[0]} outside [0, {K})")
    cm = np.zeros((K, K), dtype=np.int64)
    np.add.at(cm, (y, p), 1)
    return cm


def compute_metrics(labels: Sequence[int], predictions: Sequence[int], K: int) -> EvalReport:
    """Per-class F1 from the confusion matrix.

    Weighted F1 weights classes by support. Macro F1 averages over all ``K``
    classes, counting a class with no support as F1 = 0. A class that is
    neither present nor predicted also gets F1 = 0.
    """
    cm = confusion_matrix(labels, predictions, K)
    total = int(cm.sum())
    if total == 0:
        raise ContractError("no labels to score")
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    denom = support + predicted
    # F1 = 2 tp / (support + predicted), the harmonic mean of precision and recall.
    f1 = np.divide(2.0 * tp, denom, out=np.zeros(K), where=denom > 0)
    return EvalReport(
        weighted_f1=float((f1 * support).sum() / total),
        macro_f1=float(f1.mean()),
        accuracy=float(tp.sum() / total),
        per_class_f1={k: float(f1[k]) for k in range(K)},
        confusion=cm,
    )
