"""Planar poses, yaw-rotated boxes, BEV IoU and greedy NMS.

Boxes travel through the package in two forms: the immutable
:class:`OrientedBox3` value used at API boundaries, and ``(K, 7)`` float
arrays with columns ``(cx, cy, cz, l, w, h, yaw)`` used on hot paths.
Every array helper here accepts either form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

AREA_EPS = 1e-12
BOX_DIM = 7
POINT_DIM = 4


def normalize_angle(angle):
    """Wrap an angle (scalar or array) into ``(-pi, pi]``."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class PlanarPose:
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        vals = (self.x, self.y, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"pose must be finite, got {vals}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float
    intensity: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError("point coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.intensity])


@dataclass(frozen=True)
class OrientedBox3:
    """A box standing on the ground plane, rotated by ``yaw`` about z.

    ``l`` runs along the heading direction and ``w`` across it.
    """

    cx: float
    cy: float
    cz: float
    l: float
    w: float
    h: float
    yaw: float

    def __post_init__(self):
        if not (self.l > 0 and self.w > 0 and self.h > 0):
            raise ValueError(f"box dimensions must be positive, got l={self.l}, w={self.w}, h={self.h}")
        for name in ("cx", "cy", "cz", "l", "w", "h"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"box field {name} is not finite")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @classmethod
    def from_array(cls, arr) -> "OrientedBox3":
        return cls(*(float(v) for v in np.asarray(arr, dtype=float)[:BOX_DIM]))

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw])

    def corners_bev(self) -> np.ndarray:
        return box_corners_bev(self.as_array()[None])[0]


def as_box_array(boxes) -> np.ndarray:
    """Coerce a box, a sequence of boxes, or an array into a ``(K, 7)`` array."""
    if isinstance(boxes, OrientedBox3):
        return boxes.as_array()[None]
    if isinstance(boxes, np.ndarray):
        arr = boxes.astype(float, copy=False)
    else:
        boxes = list(boxes)
        if not boxes:
            return np.zeros((0, BOX_DIM))
        if isinstance(boxes[0], OrientedBox3):
            arr = np.stack([b.as_array() for b in boxes])
        else:
            arr = np.asarray(boxes, dtype=float)
    if arr.ndim == 1:
        arr = arr[None]
    if arr.size == 0:
        return np.zeros((0, BOX_DIM))
    return arr[:, :BOX_DIM]


def as_point_array(points) -> np.ndarray:
    if isinstance(points, Point3):
        return points.as_array()[None]
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, POINT_DIM))
    if arr.ndim == 1:
        arr = arr[None]
    return arr


# ---------------------------------------------------------------------------
# rigid transforms


def _rot(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def transform_points(points, src: PlanarPose, dst: PlanarPose) -> np.ndarray:
    """Re-express ``(P, >=2)`` points given in frame ``src`` in frame ``dst``.

    Both poses are expressed in a common world frame. Columns beyond x, y
    are passed through untouched.
    """
    pts = as_point_array(points).copy()
    if len(pts) == 0:
        return pts
    world = pts[:, :2] @ _rot(src.yaw).T + (src.x, src.y)
    pts[:, :2] = (world - (dst.x, dst.y)) @ _rot(dst.yaw)
    return pts


def transform_to_frame(p: Point3, src: PlanarPose, dst: PlanarPose) -> Point3:
    x, y, z, i = transform_points(p.as_array()[None], src, dst)[0]
    return Point3(x, y, z, i)


def transform_boxes(boxes, src: PlanarPose, dst: PlanarPose) -> np.ndarray:
    arr = as_box_array(boxes).copy()
    if len(arr) == 0:
        return arr
    arr[:, :2] = transform_points(arr[:, :2], src, dst)
    arr[:, 6] = normalize_angle(arr[:, 6] + src.yaw - dst.yaw)
    return arr


def transform_box(box: OrientedBox3, src: PlanarPose, dst: PlanarPose) -> OrientedBox3:
    return OrientedBox3.from_array(transform_boxes(box, src, dst)[0])


# ---------------------------------------------------------------------------
# containment


def points_in_boxes(points, boxes, margin: float = 0.0) -> np.ndarray:
    """Boolean ``(P, K)`` containment matrix.

    The footprint test is inflated by ``margin`` on each side; the vertical
    test is not.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    pts = as_point_array(points)
    bx = as_box_array(boxes)
    if len(pts) == 0 or len(bx) == 0:
        return np.zeros((len(pts), len(bx)), dtype=bool)
    dx = pts[:, 0:1] - bx[:, 0]
    dy = pts[:, 1:2] - bx[:, 1]
    c, s = np.cos(bx[:, 6]), np.sin(bx[:, 6])
    lx = dx * c + dy * s
    ly = -dx * s + dy * c
    inside = (np.abs(lx) <= bx[:, 3] / 2 + margin) & (np.abs(ly) <= bx[:, 4] / 2 + margin)
    if pts.shape[1] >= 3:
        z = pts[:, 2:3]
        inside &= (z >= bx[:, 2] - bx[:, 5] / 2) & (z <= bx[:, 2] + bx[:, 5] / 2)
    return inside


def point_in_box(b: OrientedBox3, p: Point3, margin: float = 0.0) -> bool:
    return bool(points_in_boxes(p.as_array()[None], b.as_array()[None], margin)[0, 0])


# ---------------------------------------------------------------------------
# BEV polygons


def box_corners_bev(boxes) -> np.ndarray:
    """Counter-clockwise footprint corners, shape ``(K, 4, 2)``."""
    bx = as_box_array(boxes)
    half = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float) / 2
    local = half[None] * bx[:, None, 3:5]
    c, s = np.cos(bx[:, 6])[:, None], np.sin(bx[:, 6])[:, None]
    xs = bx[:, None, 0] + local[..., 0] * c - local[..., 1] * s
    ys = bx[:, None, 1] + local[..., 0] * s + local[..., 1] * c
    return np.stack([xs, ys], axis=-1)


def polygon_area(poly: Sequence[Sequence[float]]) -> float:
    """Shoelace area; positive for counter-clockwise vertex order."""
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        acc += x1 * y2 - x2 * y1
    return 0.5 * acc


def clip_convex(subject: list, clip: list) -> list:
    """Sutherland-Hodgman clipping of ``subject`` by convex CCW ``clip``."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        inp = output
        output = []
        m = len(inp)
        for j in range(m):
            px, py = inp[j - 1]
            qx, qy = inp[j]
            sp = ex * (py - ay) - ey * (px - ax)
            sq = ex * (qy - ay) - ey * (qx - ax)
            if sq >= 0:
                if sp < 0:
                    t = sp / (sp - sq)
                    output.append((px + t * (qx - px), py + t * (qy - py)))
                output.append((qx, qy))
            elif sp >= 0:
                t = sp / (sp - sq)
                output.append((px + t * (qx - px), py + t * (qy - py)))
    return output


def _same_footprint(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(a[0] == b[0] and a[1] == b[1] and a[3] == b[3] and a[4] == b[4] and a[6] == b[6])


def _pair_iou(a: np.ndarray, b: np.ndarray, ca: np.ndarray, cb: np.ndarray) -> float:
    if _same_footprint(a, b):
        return 1.0
    poly = clip_convex([tuple(p) for p in ca], [tuple(p) for p in cb])
    inter = polygon_area(poly)
    if inter <= AREA_EPS:
        return 0.0
    union = a[3] * a[4] + b[3] * b[4] - inter
    return float(min(1.0, max(0.0, inter / union)))


def rotated_iou_bev(a: OrientedBox3, b: OrientedBox3) -> float:
    return float(iou_matrix([a], [b])[0, 0])


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise BEV IoU, shape ``(len(a), len(b))``.

    Pairs whose circumscribed circles do not touch are skipped.
    """
    a = as_box_array(boxes_a)
    b = as_box_array(boxes_b)
    out = np.zeros((len(a), len(b)))
    if len(a) == 0 or len(b) == 0:
        return out
    ra = 0.5 * np.hypot(a[:, 3], a[:, 4])
    rb = 0.5 * np.hypot(b[:, 3], b[:, 4])
    dist = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    ii, jj = np.nonzero(dist < ra[:, None] + rb[None, :])
    if len(ii) == 0:
        return out
    ca = box_corners_bev(a)
    cb = box_corners_bev(b)
    for i, j in zip(ii.tolist(), jj.tolist()):
        out[i, j] = _pair_iou(a[i], b[j], ca[i], cb[j])
    return out


def footprint_distance(a, b) -> float:
    """Euclidean gap between two box footprints (0 when they overlap)."""
    pa = box_corners_bev(a)[0]
    pb = box_corners_bev(b)[0]
    if polygon_area(clip_convex([tuple(p) for p in pa], [tuple(p) for p in pb])) > AREA_EPS:
        return 0.0
    best = math.inf
    for poly, other in ((pa, pb), (pb, pa)):
        for p in poly:
            for k in range(4):
                best = min(best, _point_segment_distance(p, other[k], other[(k + 1) % 4]))
    return best


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    t = float(np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0))
    return float(np.hypot(*(a + t * ab - p)))


# ---------------------------------------------------------------------------
# NMS


def score_order(scores) -> np.ndarray:
    """Indices by descending score; equal scores keep the lower index first."""
    scores = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(len(scores)), -scores))


def nms(boxes, scores, iou_thresh: float) -> list[int]:
    """Greedy non-maximum suppression on BEV IoU.

    Returns kept indices in descending score order. A box is suppressed when
    its IoU with an already kept box exceeds ``iou_thresh``.
    """
    if not 0 < iou_thresh < 1:
        raise ValueError("iou_thresh must lie in (0, 1)")
    bx = as_box_array(boxes)
    scores = np.asarray(scores, dtype=float)
    if len(bx) != len(scores):
        raise ValueError("boxes and scores differ in length")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if len(bx) == 0:
        return []
    ious = iou_matrix(bx, bx)
    suppressed = np.zeros(len(bx), dtype=bool)
    keep = []
    for i in score_order(scores).tolist():
        if suppressed[i]:
            continue
        keep.append(i)
        suppressed |= ious[i] > iou_thresh
    return keep


def nms_pairs(dets: Iterable[tuple[OrientedBox3, float]], iou_thresh: float) -> list[int]:
    """:func:`nms` over ``(box, score)`` pairs."""
    dets = list(dets)
    return nms([d[0] for d in dets], [d[1] for d in dets], iou_thresh)
