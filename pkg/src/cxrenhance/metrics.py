"""Classification metrics from a confusion matrix, mask overlap scores, timing."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class UnknownLabelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    classes: tuple
    cells: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int64)
        k = len(self.classes)
        if cells.shape != (k, k):
            raise ValueError(f"cells must be {k}x{k}, got {cells.shape}")
        if (cells < 0).any():
            raise ValueError("confusion matrix cells must be nonnegative")
        cells.flags.writeable = False
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "cells", cells)

    @property
    def k(self) -> int:
        return len(self.classes)

    @property
    def total(self) -> int:
        return int(self.cells.sum())

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return self.classes == other.classes and bool(np.array_equal(self.cells, other.cells))


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    specificity: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    classes: tuple
    per_class: tuple  # of ClassMetrics, aligned with classes
    overall_accuracy: float
    precision: float
    recall: float
    specificity: float
    f1: float
    average: str = "weighted"

    def as_dict(self) -> dict:
        return {
            "accuracy": self.overall_accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "specificity": self.specificity,
        }


@dataclass(frozen=True)
class SegScores:
    accuracy: float
    iou: float
    dice: float


@dataclass(frozen=True)
class TimingStats:
    times: tuple = field(repr=False)
    mean: float = 0.0
    median: float = 0.0
    min: float = 0.0
    max: float = 0.0

    @classmethod
    def from_times(cls, times: Iterable[float]) -> "TimingStats":
        ts = tuple(float(t) for t in times)
        if not ts:
            raise ValueError("no timings")
        if min(ts) < 0:
            raise ValueError("negative elapsed time")
        return cls(ts, statistics.fmean(ts), statistics.median(ts), min(ts), max(ts))


def confusion_from_pairs(pairs: Iterable[tuple], classes: Sequence) -> ConfusionMatrix:
    index = {c: i for i, c in enumerate(classes)}
    cells = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for true, pred in pairs:
        for label in (true, pred):
            if label not in index:
                raise UnknownLabelError(f"unknown label {label!r}")
        cells[index[true], index[pred]] += 1
    return ConfusionMatrix(tuple(classes), cells)


def _ratio(num, den) -> float:
    return float(num) / float(den) if den else 0.0


def classification_report(cm: ConfusionMatrix, average: str = "weighted") -> ClassificationReport:
    """One-vs-rest precision, recall, specificity and F1, averaged over classes.

    ``average="weighted"`` weights classes by support (row sums);
    ``"macro"`` weights them equally. Any 0/0 ratio is reported as 0.
    """
    if average not in ("weighted", "macro"):
        raise ValueError(f"average must be 'weighted' or 'macro', got {average!r}")
    total = cm.total
    if total == 0:
        raise ValueError("cannot report on an empty confusion matrix")
    cells = cm.cells
    per_class = []
    for c in range(cm.k):
        tp = int(cells[c, c])
        fn = int(cells[c].sum()) - tp
        fp = int(cells[:, c].sum()) - tp
        tn = total - tp - fn - fp
        per_class.append(
            ClassMetrics(
                precision=_ratio(tp, tp + fp),
                recall=_ratio(tp, tp + fn),
                specificity=_ratio(tn, tn + fp),
                f1=_ratio(2 * tp, 2 * tp + fn + fp),
                support=tp + fn,
            )
        )
    if average == "weighted":
        weights = [m.support / total for m in per_class]
    else:
        weights = [1.0 / cm.k] * cm.k

    def avg(name):
        return float(sum(w * getattr(m, name) for w, m in zip(weights, per_class)))

    return ClassificationReport(
        classes=cm.classes,
        per_class=tuple(per_class),
        overall_accuracy=int(np.trace(cells)) / total,
        precision=avg("precision"),
        recall=avg("recall"),
        specificity=avg("specificity"),
        f1=avg("f1"),
        average=average,
    )


def seg_overlap_scores(pred, truth) -> SegScores:
    """Pixelwise accuracy, IoU (Jaccard) and Dice between two binary masks.

    Two empty masks score 1 on every measure.
    """
    p = np.asarray(getattr(pred, "data", pred), dtype=bool)
    t = np.asarray(getattr(truth, "data", truth), dtype=bool)
    if p.shape != t.shape:
        raise ValueError(f"mask shapes differ: {p.shape} vs {t.shape}")
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = p.size - tp - fp - fn
    accuracy = (tp + tn) / p.size
    if tp + fp + fn == 0:
        return SegScores(accuracy=1.0, iou=1.0, dice=1.0)
    return SegScores(
        accuracy=accuracy,
        iou=tp / (tp + fn + fp),
        dice=2 * tp / (2 * tp + fn + fp),
    )


def time_block(work: Callable, *args, **kwargs):
    """Run ``work(*args, **kwargs)`` and return ``(result, elapsed_seconds)``."""
    t1 = time.perf_counter()
    result = work(*args, **kwargs)
    t2 = time.perf_counter()
    return result, t2 - t1


def format_report(report: ClassificationReport) -> str:
    """Plain-text report; all fractions to 4 decimals."""
    lines = [
        f"accuracy: {report.overall_accuracy:.4f}",
        f"{report.average}:",
        f"  precision: {report.precision:.4f}",
        f"  recall: {report.recall:.4f}",
        f"  f1: {report.f1:.4f}",
        f"  specificity: {report.specificity:.4f}",
        "per-class:",
    ]
    width = max(8, *(len(str(c)) for c in report.classes))
    lines.append(f"  {'class':<{width}} precision recall f1     specificity support")
    for c, m in zip(report.classes, report.per_class):
        lines.append(
            f"  {str(c):<{width}} {m.precision:.4f}    {m.recall:.4f} {m.f1:.4f} {m.specificity:.4f}      {m.support}"
        )
    return "\n".join(lines) + "\n"


def report_csv_rows(report: ClassificationReport) -> list[list]:
    rows = [["class", "precision", "recall", "f1", "specificity", "support"]]
    for c, m in zip(report.classes, report.per_class):
        rows.append([c, f"{m.precision:.4f}", f"{m.recall:.4f}", f"{m.f1:.4f}", f"{m.specificity:.4f}", m.support])
    total = sum(m.support for m in report.per_class)
    rows.append([report.average, f"{report.precision:.4f}", f"{report.recall:.4f}", f"{report.f1:.4f}",
                 f"{report.specificity:.4f}", total])
    rows.append(["accuracy", f"{report.overall_accuracy:.4f}", "", "", "", total])
    return rows
