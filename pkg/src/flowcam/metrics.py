"""Confusion-matrix metrics: per-class and macro accuracy, precision, recall, F1, FN rate."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "fn_rate")


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = true label, columns = predicted label."""

    counts: np.ndarray
    labels: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "counts": self.counts.astype(int).tolist()}


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    fn_rate: float
    zero_division: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "label": self.label, "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "fn_rate": self.fn_rate, "fn_count": self.fn,
            "zero_division": list(self.zero_division),
        }


def confusion(true_labels: Sequence[str], predicted_labels: Sequence[str],
              alphabet: Sequence[str]) -> ConfusionMatrix:
    if len(true_labels) != len(predicted_labels):
        raise ValueError(f"{len(true_labels)} true labels vs {len(predicted_labels)} predictions")
    labels = tuple(str(a) for a in alphabet)
    index = {a: i for i, a in enumerate(labels)}
    C = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        try:
            C[index[str(t)], index[str(p)]] += 1
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]!r} not in alphabet {list(labels)}") from None
    return ConfusionMatrix(C, labels)


def _ratio(num, den, name: str, flags: list[str]) -> Fraction:
    if den == 0:
        flags.append(name)
        return Fraction(0)
    return Fraction(num) / den


def _exact(C: ConfusionMatrix, i: int):
    n = len(C.labels)
    if not 0 <= i < n:
        raise IndexError(f"class index {i} out of range for {n} classes")
    M = C.counts
    tp = int(M[i, i])
    fn = int(M[i].sum() - tp)
    fp = int(M[:, i].sum() - tp)
    tn = int(M.sum() - tp - fn - fp)
    flags: list[str] = []
    pr = _ratio(tp, tp + fp, "precision", flags)
    rc = _ratio(tp, tp + fn, "recall", flags)
    values = {
        "accuracy": _ratio(tp + tn, tp + tn + fp + fn, "accuracy", flags),
        "precision": pr,
        "recall": rc,
        "f1": _ratio(2 * pr * rc, pr + rc, "f1", flags),
        "fn_rate": _ratio(fn, tp + fn, "fn_rate", flags),
    }
    return (tp, fp, fn, tn), values, flags


def class_metrics(C: ConfusionMatrix, i: int | str) -> ClassMetrics:
    """One-vs-rest metrics for class ``i``; zero denominators give 0 and are flagged.

    Ratios are formed exactly and rounded once, so fn_rate and 1 - recall agree
    as rationals.
    """
    if isinstance(i, str):
        i = C.index(i)
    (tp, fp, fn, tn), v, flags = _exact(C, i)
    return ClassMetrics(C.labels[i], tp, fp, fn, tn, *(float(v[k]) for k in METRIC_NAMES),
                        zero_division=tuple(flags))


def macro_metrics(C: ConfusionMatrix) -> dict[str, float]:
    """Unweighted mean of every per-class metric over the alphabet."""
    if len(C.labels) == 0 or C.total == 0:
        raise ValueError("empty confusion matrix")
    per = [_exact(C, i)[1] for i in range(len(C.labels))]
    return {k: float(sum(m[k] for m in per) / len(per)) for k in METRIC_NAMES}


def micro_accuracy(C: ConfusionMatrix) -> float:
    return float(np.trace(C.counts) / C.total) if C.total else 0.0


def evaluation_report(C: ConfusionMatrix) -> dict:
    return {
        "confusion": C.to_dict(),
        "per_class": [class_metrics(C, i).to_dict() for i in range(len(C.labels))],
        "macro": macro_metrics(C),
        "micro_accuracy": micro_accuracy(C),
    }
