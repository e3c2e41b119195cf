"""Binary change metrics, temporal consistency and the BCE training objectives.

Change is the positive class. A ratio with an empty denominator is 1.0 when
prediction and ground truth are both empty and 0.0 otherwise.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

BCE_EPS = 1e-7


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class MetricRow:
    f1: float
    precision: float
    recall: float
    iou_change: float
    iou_nochange: float
    miou: float
    tc: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)


def _as_mask(x) -> np.ndarray:
    return np.asarray(getattr(x, "mask", x), dtype=bool)


def confusion(pred, gt) -> Confusion:
    p, g = _as_mask(pred), _as_mask(gt)
    if p.shape != g.shape:
        raise ValueError(f"prediction {p.shape} and ground truth {g.shape} differ in size")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return Confusion(tp, fp, fn, p.size - tp - fp - fn)


def _ratio(num: int, den: int) -> float:
    # den == 0 only happens when the compared sets are both empty
    return 1.0 if den == 0 else num / den


def precision(c: Confusion) -> float:
    if c.tp + c.fp == 0:
        return 1.0 if c.fn == 0 else 0.0
    return c.tp / (c.tp + c.fp)


def recall(c: Confusion) -> float:
    if c.tp + c.fn == 0:
        return 1.0 if c.fp == 0 else 0.0
    return c.tp / (c.tp + c.fn)


def f1(c: Confusion) -> float:
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)


def iou(c: Confusion, cls: int = 1) -> float:
    """IoU of the change class (``cls=1``) or the no-change class (``cls=0``)."""
    if cls == 1:
        return _ratio(c.tp, c.tp + c.fp + c.fn)
    if cls == 0:
        return _ratio(c.tn, c.tn + c.fp + c.fn)
    raise ValueError("cls must be 0 or 1")


def miou(c: Confusion) -> float:
    return (iou(c, 1) + iou(c, 0)) / 2


def metric_row(c: Confusion, tc: float = 1.0) -> MetricRow:
    ic, inc = iou(c, 1), iou(c, 0)
    return MetricRow(f1(c), precision(c), recall(c), ic, inc, (ic + inc) / 2, tc)


def temporal_consistency(pred_fwd, pred_bwd) -> float:
    """Intersection over union of the two temporal-order predictions."""
    a, b = _as_mask(pred_fwd), _as_mask(pred_bwd)
    if a.shape != b.shape:
        raise ValueError(f"prediction sizes differ: {a.shape} vs {b.shape}")
    return _ratio(int(np.count_nonzero(a & b)), int(np.count_nonzero(a | b)))


def tc_counts(pred_fwd, pred_bwd) -> tuple[int, int]:
    a, b = _as_mask(pred_fwd), _as_mask(pred_bwd)
    return int(np.count_nonzero(a & b)), int(np.count_nonzero(a | b))


def bce(p, y):
    """Binary cross-entropy with ``p`` clipped to [1e-7, 1 - 1e-7]. Works on arrays."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(y, dtype=np.float64)
    out = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(out) if out.ndim == 0 else out


def bitemporal_bce(loss_fwd: float, loss_bwd: float, m: float = 0.5, n: float = 0.5) -> float:
    if m < 0 or n < 0:
        raise ValueError("weights must be non-negative")
    return m * loss_fwd + n * loss_bwd


def mean_rows(rows: list[MetricRow]) -> MetricRow:
    if not rows:
        raise ValueError("no rows to average")
    return MetricRow(*(math.fsum(getattr(r, f) for r in rows) / len(rows) for f in MetricRow.__dataclass_fields__))
