"""Noisy-oracle 3D detector with confidence and positional variance.

The detector knows where the ground-truth boxes are but only "sees" an
object through the points that land on it. With ``n`` supporting points an
object is found with probability ``1 - exp(-n / p_scale)``, its center is
off by Gaussian noise of std ``sigma0 / sqrt(n)`` on each axis, and it
reports confidence ``n / (n + n_half)`` and variance ``calib_gamma *
sigma0**2 / n`` for x and y.

Random draws are consumed in a fixed pattern (a block per ground-truth
object, then false positives), so two calls on the same stream that differ
only in the cloud share their noise realizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import BOX_DIM, OrientedBox3, as_box_array, as_point_array, nms, normalize_angle, points_in_boxes

COUNT_MARGIN = 0.1
MIN_CONF, MAX_CONF = 0.05, 0.99
FP_CONF_RANGE = (0.05, 0.3)
FP_SIZE = (4.2, 1.8, 1.6)
DEFAULT_FP_REGION = (-100.0, 100.0, -40.0, 40.0)


@dataclass(frozen=True)
class DetectorProfile:
    name: str = "default"
    sigma0: float = 1.0
    n_half: float = 16.0
    p_scale: float = 6.0
    dim_sigma: float = 0.08
    yaw_sigma: float = 0.03
    fp_rate: float = 0.05
    calib_gamma: float = 1.0
    nms_thresh: float = 0.15

    def __post_init__(self):
        for k in ("sigma0", "n_half", "p_scale", "dim_sigma", "yaw_sigma", "fp_rate"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be non-negative")
        if not self.calib_gamma > 0:
            raise ValueError("calib_gamma must be positive")
        if not 0 < self.nms_thresh < 1:
            raise ValueError("nms_thresh must lie in (0, 1)")


@dataclass(frozen=True)
class Detection:
    box: OrientedBox3
    c: float
    ux: float
    uy: float

    def __post_init__(self):
        if not 0 <= self.c <= 1:
            raise ValueError("confidence must lie in [0, 1]")
        if self.ux < 0 or self.uy < 0:
            raise ValueError("variances must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.box.as_array(), [self.c, self.ux, self.uy]])


@dataclass(frozen=True)
class DetectionSet:
    """K detections as parallel arrays.

    ``boxes`` is the (K, 7) regression block, ``scores`` the confidences and
    ``variances`` the (K, 2) positional variances ``(ux, uy)``.
    """

    boxes: np.ndarray
    scores: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        boxes = as_box_array(self.boxes)
        scores = np.asarray(self.scores, dtype=float).reshape(-1)
        var = np.asarray(self.variances, dtype=float).reshape(-1, 2)
        if not (len(boxes) == len(scores) == len(var)):
            raise ValueError("boxes, scores and variances differ in length")
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "variances", var)

    @classmethod
    def empty(cls) -> "DetectionSet":
        return cls(np.zeros((0, BOX_DIM)), np.zeros(0), np.zeros((0, 2)))

    @classmethod
    def from_detections(cls, dets) -> "DetectionSet":
        dets = list(dets)
        if not dets:
            return cls.empty()
        arr = np.stack([d.as_array() for d in dets])
        return cls(arr[:, :7], arr[:, 7], arr[:, 8:10])

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def confidences(self) -> np.ndarray:
        return self.scores

    @property
    def uncertainties(self) -> np.ndarray:
        return self.variances

    def take(self, idx) -> "DetectionSet":
        idx = np.asarray(idx, dtype=int)
        return DetectionSet(self.boxes[idx], self.scores[idx], self.variances[idx])

    def to_list(self) -> list[Detection]:
        return [
            Detection(OrientedBox3.from_array(b), float(c), float(u[0]), float(u[1]))
            for b, c, u in zip(self.boxes, self.scores, self.variances)
        ]

    def equals(self, other: "DetectionSet") -> bool:
        return (
            np.array_equal(self.boxes, other.boxes)
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.variances, other.variances)
        )

    @staticmethod
    def concat(*sets: "DetectionSet") -> "DetectionSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            return DetectionSet.empty()
        return DetectionSet(
            np.vstack([s.boxes for s in sets]),
            np.concatenate([s.scores for s in sets]),
            np.vstack([s.variances for s in sets]),
        )


def count_points_per_object(cloud, objects, margin: float = COUNT_MARGIN) -> np.ndarray:
    """Points supporting each object; shared points go to the nearest center."""
    objects = as_box_array(objects)
    pts = as_point_array(cloud)
    counts = np.zeros(len(objects), dtype=int)
    if len(pts) == 0 or len(objects) == 0:
        return counts
    inside = points_in_boxes(pts, objects, margin)
    hit = inside.any(axis=1)
    if not hit.any():
        return counts
    pts, inside = pts[hit], inside[hit]
    d2 = (pts[:, 0:1] - objects[:, 0]) ** 2 + (pts[:, 1:2] - objects[:, 1]) ** 2
    owner = np.argmin(np.where(inside, d2, np.inf), axis=1)
    return np.bincount(owner, minlength=len(objects))


def center_sigma(n, sigma0: float):
    """Per-axis center error std for ``n`` supporting points."""
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(n > 0, sigma0 / np.sqrt(np.maximum(n, 1e-300)), np.inf)


def confidence(n, n_half: float):
    n = np.asarray(n, dtype=float)
    return np.clip(n / (n + n_half), MIN_CONF, MAX_CONF)


def detect(cloud, objects, profile: DetectorProfile, rng: np.random.Generator,
           fp_region=DEFAULT_FP_REGION, counts=None) -> DetectionSet:
    """Detections for ``objects`` (in the cloud's frame) given the evidence in ``cloud``."""
    objects = as_box_array(objects)
    if counts is None:
        counts = count_points_per_object(cloud, objects)
    n_obj = len(objects)
    u = rng.random(n_obj)
    z = rng.standard_normal((n_obj, 7))

    n = counts.astype(float)
    found = (n >= 1) & (u < 1.0 - np.exp(-n / profile.p_scale))
    idx = np.nonzero(found)[0]
    n = n[idx]
    sigma = profile.sigma0 / np.sqrt(n)
    boxes = objects[idx].copy()
    boxes[:, 0:3] += sigma[:, None] * z[idx, 0:3]
    boxes[:, 3:6] = np.maximum(boxes[:, 3:6] + profile.dim_sigma * z[idx, 3:6], 0.1)
    boxes[:, 6] = normalize_angle(boxes[:, 6] + profile.yaw_sigma * z[idx, 6])
    scores = confidence(n, profile.n_half)
    var = profile.calib_gamma * sigma**2
    variances = np.column_stack([var, var])

    fp = _false_positives(objects, profile, rng, fp_region)
    dets = DetectionSet.concat(DetectionSet(boxes, scores, variances), fp)
    if len(dets) == 0:
        return dets
    return dets.take(nms(dets.boxes, dets.scores, profile.nms_thresh))


def _false_positives(objects, profile, rng, region) -> DetectionSet:
    x0, x1, y0, y1 = region
    free_area = max((x1 - x0) * (y1 - y0) - float(np.sum(objects[:, 3] * objects[:, 4])), 0.0)
    k = int(rng.poisson(profile.fp_rate * free_area / 1000.0))
    if k == 0:
        return DetectionSet.empty()
    l, w, h = FP_SIZE
    boxes = np.column_stack([
        rng.uniform(x0, x1, k),
        rng.uniform(y0, y1, k),
        np.full(k, h / 2),
        l + 0.3 * rng.standard_normal(k),
        w + 0.1 * rng.standard_normal(k),
        np.full(k, h),
        rng.uniform(-math.pi, math.pi, k),
    ])
    scores = rng.uniform(*FP_CONF_RANGE, k)
    centers = np.column_stack([boxes[:, :2], boxes[:, 2]])
    clear = ~points_in_boxes(centers, objects).any(axis=1)
    var = (3.0 * profile.sigma0) ** 2
    return DetectionSet(boxes[clear], scores[clear], np.full((int(clear.sum()), 2), var))


_PRESETS = (
    DetectorProfile(),
    DetectorProfile(name="coarse", sigma0=1.3, n_half=20.0, fp_rate=0.03),
    DetectorProfile(name="sharp", sigma0=0.8, n_half=12.0, fp_rate=0.08),
)


def heterogeneous_profiles(k: int) -> list[DetectorProfile]:
    """``k`` distinct detector presets; the first is always the default.

    Presets past the third scale the default's noise up by 15% per step.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    out = list(_PRESETS[:k])
    base = _PRESETS[0]
    for j in range(len(out), k):
        step = j - len(_PRESETS) + 1
        out.append(replace(
            base,
            name=f"variant{j}",
            sigma0=base.sigma0 * (1 + 0.15 * step),
            n_half=base.n_half + step,
            fp_rate=base.fp_rate * (1 + 0.1 * step),
        ))
    return out
