"""Accuracy, F1 and confusion-matrix reporting.

All figures are percentages derived from one :class:`ConfusionMatrix`.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, LabelError, UndefinedMetricError

UNDEFINED = "n/a"


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    class_names: tuple = ()

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DimensionError(f"confusion matrix must be square, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        names = tuple(self.class_names) or tuple(str(i) for i in range(counts.shape[0]))
        object.__setattr__(self, "class_names", names)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.k != self.k:
            raise DimensionError(f"cannot merge {self.k}-class and {other.k}-class matrices")
        return ConfusionMatrix(self.counts + other.counts, self.class_names)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + list(self.class_names))
        for name, row in zip(self.class_names, self.counts):
            w.writerow([name] + [int(v) for v in row])
        return buf.getvalue()


def confusion_matrix(preds, labels, k: int, class_names=()) -> ConfusionMatrix:
    preds, labels = np.asarray(preds, dtype=np.int64), np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise DimensionError(f"{preds.size} predictions vs {labels.size} labels")
    for arr, what in ((labels, "label"), (preds, "prediction")):
        bad = np.flatnonzero((arr < 0) | (arr >= k))
        if bad.size:
            raise LabelError(f"{what} {arr[bad[0]]} at index {bad[0]} outside [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    return ConfusionMatrix(counts, class_names)


def _require_samples(cm):
    if cm.n == 0:
        raise UndefinedMetricError("metric undefined on zero samples")


def overall_accuracy(cm: ConfusionMatrix) -> float:
    _require_samples(cm)
    return 100.0 * np.trace(cm.counts) / cm.n


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    """F1 per class in percent; a class never predicted nor present scores 0."""
    tp = np.diag(cm.counts).astype(np.float64)
    predicted = cm.counts.sum(axis=0)
    actual = cm.counts.sum(axis=1)
    denom = predicted + actual  # 2TP/(2TP+FP+FN) == 2PR/(P+R)
    return np.where(denom > 0, 200.0 * tp / np.maximum(denom, 1), 0.0)


def f1_score(cm: ConfusionMatrix, mode: str = "weighted") -> float:
    _require_samples(cm)
    f1 = per_class_f1(cm)
    support = cm.counts.sum(axis=1)
    if mode == "macro":
        return float(f1.mean())
    if mode == "weighted":
        return float((f1 * support).sum() / support.sum())
    raise ValueError(f"F1 mode must be 'macro' or 'weighted', got {mode!r}")


def per_class_accuracy(cm: ConfusionMatrix) -> np.ndarray:
    """Recall per class in percent; NaN where the class has no samples."""
    support = cm.counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(support > 0, 100.0 * np.diag(cm.counts) / support, np.nan)


def _fmt(v, digits=2):
    return UNDEFINED if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.{digits}f}"


@dataclass
class EvaluationReport:
    overall_accuracy: float
    f1: float
    f1_macro: float
    per_class_accuracy: np.ndarray
    confusion: ConfusionMatrix
    n_samples: int
    f1_mode: str = "weighted"
    train_time_seconds: float | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix, train_time_seconds=None) -> "EvaluationReport":
        return cls(overall_accuracy(cm), f1_score(cm, "weighted"), f1_score(cm, "macro"),
                   per_class_accuracy(cm), cm, cm.n, "weighted", train_time_seconds)

    def summary(self) -> dict:
        return {"oa": self.overall_accuracy, "f1": self.f1, "f1_macro": self.f1_macro, "n": self.n_samples,
                "train_time_seconds": self.train_time_seconds}

    def to_markdown(self, title="") -> str:
        lines = []
        if title:
            lines += [f"### {title}", ""]
        lines += ["| OA (%) | F1 weighted (%) | F1 macro (%) | samples | train time (s) |",
                  "|---:|---:|---:|---:|---:|",
                  f"| {_fmt(self.overall_accuracy)} | {_fmt(self.f1)} | {_fmt(self.f1_macro)} | {self.n_samples} "
                  f"| {_fmt(self.train_time_seconds, 1)} |", "",
                  "| class | accuracy (%) |", "|---|---:|"]
        for name, acc in zip(self.confusion.class_names, self.per_class_accuracy):
            lines.append(f"| {name} | {_fmt(float(acc))} |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["overall_accuracy", repr(self.overall_accuracy)])
        w.writerow(["f1_weighted", repr(self.f1)])
        w.writerow(["f1_macro", repr(self.f1_macro)])
        w.writerow(["n_samples", self.n_samples])
        if self.train_time_seconds is not None:
            w.writerow(["train_time_seconds", repr(self.train_time_seconds)])
        for name, acc in zip(self.confusion.class_names, self.per_class_accuracy):
            w.writerow([f"accuracy[{name}]", "" if math.isnan(acc) else repr(float(acc))])
        return buf.getvalue()


def predict_in_shards(model, x, batch_size=1024, workers=1) -> np.ndarray:
    """Eval-mode argmax predictions, batches optionally spread over threads."""
    x = np.asarray(x, dtype=np.float64)
    previous = model.mode
    model.eval()
    try:
        starts = list(range(0, len(x), batch_size))

        def run(lo):
            return np.argmax(model(x[lo:lo + batch_size]).data, axis=1)

        if workers > 1 and len(starts) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(run, starts))
        else:
            parts = [run(lo) for lo in starts]
    finally:
        if previous == "train":
            model.train()
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def evaluate(model, ds, batch_size: int = 1024, workers: int = 1, train_time_seconds=None) -> EvaluationReport:
    """Predict ``ds`` and derive every metric from the resulting confusion matrix."""
    t, c = model.input_signature
    if ds.samples.shape[1:] != (t, c):
        raise DimensionError(f"model expects [*, {t}, {c}] but dataset is {list(ds.samples.shape)}")
    if ds.k != model.n_classes:
        raise DimensionError(f"model predicts {model.n_classes} classes, dataset declares {ds.k}")
    preds = predict_in_shards(model, ds.samples, batch_size, workers)
    cm = confusion_matrix(preds, ds.labels, ds.k, [f"{cid}" for cid in ds.class_ids])
    return EvaluationReport.from_confusion(cm, train_time_seconds)
