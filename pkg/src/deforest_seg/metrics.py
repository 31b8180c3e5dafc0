"""Pixel accuracy, F1 and IoU from binary confusion counts."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    pixel_accuracy: float
    f1: float
    iou: float
    confusion: Confusion

    def to_text(self) -> str:
        """Flat ``key=value`` record; rates with 4 fractional digits."""
        lines = [f"pixel_accuracy={self.pixel_accuracy:.4f}", f"f1={self.f1:.4f}", f"iou={self.iou:.4f}"]
        lines += [f"{k}={v}" for k, v in asdict(self.confusion).items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        kv = dict(line.split("=", 1) for line in text.strip().splitlines())
        conf = Confusion(*(int(kv[k]) for k in ("tp", "fp", "fn", "tn")))
        return cls(float(kv["pixel_accuracy"]), float(kv["f1"]), float(kv["iou"]), conf)


def _check_binary(name: str, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype == bool:
        return a
    bad = a[(a != 0) & (a != 1)]
    if bad.size:
        raise ValueError(f"{name} must be binary, found value {bad.flat[0].item()!r}")
    return a.astype(bool)


def confusion(pred_binary, target) -> Confusion:
    pred = _check_binary("prediction", pred_binary)
    true = _check_binary("target", target)
    if pred.shape != true.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match target {true.shape}")
    tp = int(np.count_nonzero(pred & true))
    fp = int(np.count_nonzero(pred & ~true))
    fn = int(np.count_nonzero(~pred & true))
    return Confusion(tp, fp, fn, pred.size - tp - fp - fn)


def report(c: Confusion) -> MetricsReport:
    """Rates from counts; F1 and IoU are 1 when there are no positives anywhere."""
    if c.total == 0:
        raise ValueError("no pixels to evaluate")
    acc = (c.tp + c.tn) / c.total
    if c.tp + c.fp + c.fn == 0:
        return MetricsReport(acc, 1.0, 1.0, c)
    return MetricsReport(acc, 2 * c.tp / (2 * c.tp + c.fp + c.fn), c.tp / (c.tp + c.fp + c.fn), c)


def evaluate(pred_binary, target) -> MetricsReport:
    return report(confusion(pred_binary, target))


def evaluate_many(pairs: Iterable[tuple[np.ndarray, np.ndarray]], average: str = "micro") -> MetricsReport:
    """Score a query set.

    ``micro`` pools confusion counts over all pixels of all pairs; ``macro``
    averages the per-pair rates (the confusion field then holds pooled counts).
    """
    reports = [evaluate(p, t) for p, t in pairs]
    if not reports:
        raise ValueError("no mask pairs to evaluate")
    pooled = sum((r.confusion for r in reports), Confusion())
    if average == "micro":
        return report(pooled)
    if average == "macro":
        n = len(reports)
        return MetricsReport(
            sum(r.pixel_accuracy for r in reports) / n,
            sum(r.f1 for r in reports) / n,
            sum(r.iou for r in reports) / n,
            pooled,
        )
    raise ValueError(f"average must be 'micro' or 'macro', got {average!r}")
