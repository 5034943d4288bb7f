"""Hybrid message packing under a float budget, and its wire format.

A budget counts 32-bit values. Boxes cost 7 floats ``(x, y, z, l, w, h,
yaw)`` and points cost 4 ``(x, y, z, intensity)``. Boxes are packed first,
best confidence first; whatever is left after *all* K boxes would have been
sent buys points, drawn by weighted sampling without replacement with
weights taken from the positional variance of the detection they fall in.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .detector import DetectionSet
from .geometry import BOX_DIM, POINT_DIM, PlanarPose, as_point_array, points_in_boxes, score_order

BOX_FLOATS = BOX_DIM
POINT_FLOATS = POINT_DIM
BOX_BYTES = 4 * BOX_FLOATS
POINT_BYTES = 4 * POINT_FLOATS

MAGIC = b"HYC1"
VERSION = 1
_HEADER = struct.Struct("<4sH3fII")
HEADER_BYTES = _HEADER.size
_F32_PI_DOWN = np.nextafter(np.float32(np.pi), np.float32(0.0))


class MalformedFrameError(ValueError):
    """A byte sequence is not a valid hybrid-message frame."""


@dataclass(frozen=True)
class BudgetSplit:
    b_box: int
    b_point: int

    @property
    def floats(self) -> int:
        return BOX_FLOATS * self.b_box + POINT_FLOATS * self.b_point


@dataclass(frozen=True)
class PackerConfig:
    delta: float = 1e-3
    expand_cap: float = 2.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.expand_cap < 0:
            raise ValueError("expand_cap must be non-negative")


def _f32(a, width: int) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float32)
    if arr.size == 0:
        return np.zeros((0, width), dtype=np.float32)
    arr = arr.reshape(-1, width)
    arr.setflags(write=False)
    return arr


def quantize_pose(p: PlanarPose) -> PlanarPose:
    """Round a pose to float32 so it survives the wire unchanged."""
    yaw = float(np.float32(p.yaw))
    # compare in float64: float32(pi) lies just above pi and would wrap
    if yaw > np.pi or yaw <= -np.pi:
        yaw = float(_F32_PI_DOWN)
    return PlanarPose(float(np.float32(p.x)), float(np.float32(p.y)), yaw)


@dataclass(frozen=True)
class HybridMessage:
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, BOX_DIM), np.float32))
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, POINT_DIM), np.float32))
    sender_pose: PlanarPose = PlanarPose(0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "boxes", _f32(self.boxes, BOX_DIM))
        object.__setattr__(self, "points", _f32(self.points, POINT_DIM))
        object.__setattr__(self, "sender_pose", quantize_pose(self.sender_pose))

    @property
    def n_boxes(self) -> int:
        return len(self.boxes)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def payload_floats(self) -> int:
        return BOX_FLOATS * self.n_boxes + POINT_FLOATS * self.n_points

    @property
    def payload_bytes(self) -> int:
        return BOX_BYTES * self.n_boxes + POINT_BYTES * self.n_points

    def __eq__(self, other):
        if not isinstance(other, HybridMessage):
            return NotImplemented
        return (
            self.sender_pose == other.sender_pose
            and self.boxes.tobytes() == other.boxes.tobytes()
            and self.points.tobytes() == other.points.tobytes()
            and self.boxes.shape == other.boxes.shape
            and self.points.shape == other.points.shape
        )

    __hash__ = None


# ---------------------------------------------------------------------------
# budget and box selection


def allocate_budget(budget_floats: int, k: int) -> BudgetSplit:
    """Split a float budget between K candidate boxes and points.

    Boxes take ``min(K, B // 7)``; points get ``(B - 7K) // 4`` only once
    every box fits.
    """
    b = int(budget_floats)
    if b < 0 or k < 0:
        raise ValueError("budget and K must be non-negative")
    b_box = min(k, b // BOX_FLOATS)
    rest = b - BOX_FLOATS * k
    b_point = rest // POINT_FLOATS if rest > 0 else 0
    return BudgetSplit(b_box, b_point)


def select_boxes(confidences, b_box: int) -> np.ndarray:
    """Binary mask over the ``b_box`` most confident detections.

    Picking the top-b entries maximizes the summed confidence under a
    cardinality cap; ties go to the lower index.
    """
    conf = np.asarray(confidences, dtype=float)
    if b_box < 0:
        raise ValueError("b_box must be non-negative")
    mask = np.zeros(len(conf), dtype=bool)
    mask[score_order(conf)[:b_box]] = True
    return mask


def pack_box_message(dets: DetectionSet, mask) -> np.ndarray:
    """The 7 regression values of each selected detection, best first."""
    mask = np.asarray(mask, dtype=bool)
    if len(mask) != len(dets):
        raise ValueError("mask length must equal the number of detections")
    idx = np.nonzero(mask)[0]
    idx = idx[score_order(dets.scores[idx])]
    return dets.boxes[idx].astype(np.float32)


# ---------------------------------------------------------------------------
# point selection


def expand_boxes(dets: DetectionSet, cfg: PackerConfig | None = None) -> np.ndarray:
    """Grow length and width by ``2 * sqrt(u)``, capped at ``expand_cap``."""
    cfg = cfg or PackerConfig()
    if np.any(dets.variances < 0):
        raise ValueError("variances must be non-negative")
    out = dets.boxes.copy()
    grow = np.minimum(2.0 * np.sqrt(dets.variances), cfg.expand_cap)
    out[:, 3] += grow[:, 0]
    out[:, 4] += grow[:, 1]
    return out


def weight_points(cloud, expanded, dets: DetectionSet, cfg: PackerConfig | None = None,
                  flat_weight: float | None = None) -> np.ndarray:
    """Sampling weight per point.

    A point inside one or more regions takes the largest ``ux + uy`` among
    them (never below ``delta``); every other point gets ``delta``. With
    ``flat_weight`` set, points inside any region get that constant instead.
    """
    cfg = cfg or PackerConfig()
    pts = as_point_array(cloud)
    weights = np.full(len(pts), cfg.delta)
    if len(pts) == 0 or len(dets) == 0:
        return weights
    inside = points_in_boxes(pts, expanded)
    covered = inside.any(axis=1)
    if flat_weight is not None:
        weights[covered] = max(flat_weight, cfg.delta)
        return weights
    u = dets.variances.sum(axis=1)
    best = np.max(np.where(inside, u[None, :], -np.inf), axis=1)
    weights[covered] = np.maximum(best[covered], cfg.delta)
    return weights


def weighted_sample_indices(weights, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of a weighted sample of size ``min(k, P)`` without replacement.

    Each item draws ``u`` in (0, 1] and gets key ``u ** (1 / w)``; the ``k``
    largest keys win (compared as ``log(u) / w``). Returned in key order.
    """
    w = np.asarray(weights, dtype=float)
    if np.any(~(w > 0)):
        raise ValueError("weights must be positive")
    p = len(w)
    u = 1.0 - rng.random(p)
    if k <= 0 or p == 0:
        return np.zeros(0, dtype=int)
    keys = np.log(u) / w
    if k >= p:
        return np.argsort(-keys, kind="stable")
    top = np.argpartition(-keys, k - 1)[:k]
    return top[np.argsort(-keys[top], kind="stable")]


def weighted_sample(cloud, weights, b_point: int, rng: np.random.Generator) -> np.ndarray:
    pts = as_point_array(cloud)
    if len(weights) != len(pts):
        raise ValueError("weights and cloud differ in length")
    return pts[weighted_sample_indices(weights, b_point, rng)]


def pack_hybrid(dets: DetectionSet, cloud, budget_floats: int, cfg: PackerConfig | None,
                rng: np.random.Generator, sender_pose: PlanarPose = PlanarPose(0.0, 0.0, 0.0),
                send_boxes: bool = True, expand: bool = True, weighting: str = "uncertainty") -> HybridMessage:
    """Build one sender's hybrid message.

    ``send_boxes=False`` treats K as zero so the whole budget buys points.
    ``expand`` and ``weighting`` (``"uncertainty"``, ``"flat"`` or
    ``"uniform"``) switch off parts of the point packer for ablations.
    """
    cfg = cfg or PackerConfig()
    pts = as_point_array(cloud)
    k = len(dets) if send_boxes else 0
    split = allocate_budget(budget_floats, k)
    if send_boxes:
        boxes = pack_box_message(dets, select_boxes(dets.scores, split.b_box))
    else:
        boxes = np.zeros((0, BOX_DIM), np.float32)

    if weighting == "uniform":
        weights = np.full(len(pts), cfg.delta)
    else:
        regions = expand_boxes(dets, cfg) if expand else dets.boxes
        flat = 1.0 if weighting == "flat" else None
        if weighting not in ("uncertainty", "flat"):
            raise ValueError(f"unknown weighting {weighting!r}")
        weights = weight_points(pts, regions, dets, cfg, flat_weight=flat)
    points = weighted_sample(pts, weights, split.b_point, rng)
    return HybridMessage(boxes, points, sender_pose)


# ---------------------------------------------------------------------------
# wire format


def serialize(msg: HybridMessage) -> bytes:
    """Little-endian frame: header, then boxes, then points, all float32."""
    if msg.n_boxes > 0xFFFFFFFF or msg.n_points > 0xFFFFFFFF:
        raise ValueError("record counts must fit in uint32")
    p = msg.sender_pose
    header = _HEADER.pack(MAGIC, VERSION, p.x, p.y, p.yaw, msg.n_boxes, msg.n_points)
    return header + msg.boxes.astype("<f4").tobytes() + msg.points.astype("<f4").tobytes()


def deserialize(data: bytes) -> HybridMessage:
    data = bytes(data)
    if len(data) < HEADER_BYTES:
        raise MalformedFrameError(f"frame truncated: {len(data)} bytes < {HEADER_BYTES}-byte header")
    magic, version, x, y, yaw, n_boxes, n_points = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedFrameError(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedFrameError(f"unsupported version {version}")
    expected = HEADER_BYTES + BOX_BYTES * n_boxes + POINT_BYTES * n_points
    if len(data) != expected:
        raise MalformedFrameError(
            f"frame holds {len(data)} bytes but counts ({n_boxes} boxes, {n_points} points) need {expected}"
        )
    if not all(np.isfinite((x, y, yaw))):
        raise MalformedFrameError("sender pose is not finite")
    off = HEADER_BYTES
    boxes = np.frombuffer(data, "<f4", BOX_DIM * n_boxes, off).reshape(n_boxes, BOX_DIM)
    off += BOX_BYTES * n_boxes
    points = np.frombuffer(data, "<f4", POINT_DIM * n_points, off).reshape(n_points, POINT_DIM)
    return HybridMessage(boxes.astype(np.float32), points.astype(np.float32), PlanarPose(x, y, yaw))
