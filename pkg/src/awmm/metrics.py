"""Binary classification metrics (malignant = positive class) and report files."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

METRIC_NAMES = ("ACC", "SEN", "SPE", "PRE", "F1")
UNDEFINED = "undefined"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.total < 1:
            raise ValueError("confusion matrix is empty")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, predicted, labels) -> "ConfusionCounts":
        predicted = np.asarray(predicted).astype(bool)
        labels = np.asarray(labels).astype(bool)
        return cls(tp=int(np.sum(predicted & labels)), fp=int(np.sum(predicted & ~labels)),
                   tn=int(np.sum(~predicted & ~labels)), fn=int(np.sum(~predicted & labels)))


@dataclass
class MetricsReport:
    """Metric values as fractions; ``None`` marks a zero denominator."""

    acc: object
    sen: object
    spe: object
    pre: object
    f1: object
    counts: ConfusionCounts
    metadata: dict = field(default_factory=dict)

    def values(self) -> dict:
        return {"ACC": self.acc, "SEN": self.sen, "SPE": self.spe, "PRE": self.pre, "F1": self.f1}

    def as_dict(self) -> dict:
        vals = {k: (None if v is None else float(v)) for k, v in self.values().items()}
        c = self.counts
        return {**vals, "counts": {"TP": c.tp, "FP": c.fp, "TN": c.tn, "FN": c.fn},
                "metadata": self.metadata}

    def percent_row(self) -> dict:
        return {k: (UNDEFINED if v is None else f"{100.0 * float(v):.2f}")
                for k, v in self.values().items()}


def _ratio(num, den, exact):
    if den == 0:
        return None
    return Fraction(num, den) if exact else num / den


def compute(counts: ConfusionCounts, exact: bool = False, metadata: dict | None = None) -> MetricsReport:
    """Metrics from counts. With ``exact`` the values are ``Fraction`` objects."""
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    acc = _ratio(tp + tn, counts.total, exact)
    sen = _ratio(tp, tp + fn, exact)
    spe = _ratio(tn, tn + fp, exact)
    pre = _ratio(tp, tp + fp, exact)
    if sen is None or pre is None or pre + sen == 0:
        f1 = None
    else:
        f1 = 2 * pre * sen / (pre + sen)
    return MetricsReport(acc, sen, spe, pre, f1, counts, dict(metadata or {}))


def evaluate(model, batch, mode: str = "fusion", modality: str | None = None,
             metadata: dict | None = None) -> MetricsReport:
    if len(batch) == 0:
        raise ValueError("cannot evaluate on an empty split")
    predicted, _ = model.predict(batch, mode, modality)
    return compute(ConfusionCounts.from_predictions(predicted, batch.labels), metadata=metadata)


def accuracy(model, batch, mode: str = "fusion", modality: str | None = None) -> float:
    predicted, _ = model.predict(batch, mode, modality)
    return float(np.mean(predicted == batch.labels))


def write_json(path, reports: list[MetricsReport]) -> None:
    with open(path, "w") as f:
        json.dump([r.as_dict() for r in reports], f, indent=2, sort_keys=True)
        f.write("\n")


def write_csv(path, reports: list[MetricsReport], keys=("variant", "split", "mode", "seed")) -> None:
    """Flat table, one row per report, metrics in percent with 2 decimals."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([*keys, *METRIC_NAMES])
        for r in reports:
            row = r.percent_row()
            w.writerow([r.metadata.get(k, "") for k in keys] + [row[m] for m in METRIC_NAMES])
