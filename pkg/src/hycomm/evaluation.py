"""AP at BEV IoU 0.3 / 0.5 / 0.7 and communication volume in log2 bytes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .detector import DetectionSet
from .geometry import as_box_array, iou_matrix, score_order
from .messaging import BOX_BYTES, POINT_BYTES

IOU_THRESHOLDS = (0.3, 0.5, 0.7)


@dataclass(frozen=True)
class ApResult:
    ap30: float
    ap50: float
    ap70: float
    n_gt: int
    n_det: int

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.ap30, self.ap50, self.ap70)


@dataclass(frozen=True)
class VolumeReport:
    payload_bytes: int
    log2_bytes: float


def match_detections(dets: DetectionSet, gts, iou_thresh: float, ious=None) -> np.ndarray:
    """TP flags for detections visited in descending confidence.

    Each detection claims the unmatched ground truth it overlaps most and
    is a TP when that overlap reaches ``iou_thresh``.
    """
    if not 0 < iou_thresh < 1:
        raise ValueError("iou_thresh must lie in (0, 1)")
    gts = as_box_array(gts)
    if ious is None:
        ious = iou_matrix(dets.boxes, gts)
    flags = np.zeros(len(dets), dtype=bool)
    taken = np.zeros(len(gts), dtype=bool)
    for rank, i in enumerate(score_order(dets.scores).tolist()):
        if len(gts) == 0:
            break
        cand = np.where(taken, -1.0, ious[i])
        j = int(np.argmax(cand))
        if cand[j] >= iou_thresh:
            flags[rank] = True
            taken[j] = True
    return flags


def average_precision(flags, n_gt: int) -> float:
    """All-point AP: area under the precision envelope over recall.

    Every recall step is ``1 / n_gt`` wide and the envelope takes values
    ``tp / rank`` with ``rank <= len(flags)``, so the area is summed exactly
    in rationals and rounded once.
    """
    flags = np.asarray(flags, dtype=bool)
    if n_gt < 0:
        raise ValueError("n_gt must be non-negative")
    if n_gt == 0:
        return 1.0 if len(flags) == 0 else 0.0
    if len(flags) == 0:
        return 0.0
    n = len(flags)
    tp = np.cumsum(flags)
    precision = tp / np.arange(1, n + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    values, counts = np.unique(envelope[flags], return_counts=True)
    # distinct ratios with denominators <= n sit far apart, so each float
    # recovers its ratio exactly
    area = sum((Fraction(float(v)).limit_denominator(n) * int(c) for v, c in zip(values, counts)), Fraction(0))
    return float(area / n_gt)


def evaluate(dets: DetectionSet, gts) -> ApResult:
    gts = as_box_array(gts)
    ious = iou_matrix(dets.boxes, gts)
    aps = [average_precision(match_detections(dets, gts, t, ious), len(gts)) for t in IOU_THRESHOLDS]
    return ApResult(*aps, n_gt=len(gts), n_det=len(dets))


def communication_volume(msgs) -> VolumeReport:
    total = sum(BOX_BYTES * m.n_boxes + POINT_BYTES * m.n_points for m in msgs)
    return VolumeReport(int(total), math.log2(max(total, 1)))
