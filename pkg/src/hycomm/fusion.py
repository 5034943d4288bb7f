"""Early fusion by re-detection, then late fusion by NMS."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import DEFAULT_FP_REGION, DetectionSet, DetectorProfile, detect
from .geometry import POINT_DIM, as_box_array, as_point_array, nms


@dataclass(frozen=True)
class FusionConfig:
    nms_thresh: float = 0.15
    recv_box_score: float = 0.5

    def __post_init__(self):
        if not 0 < self.nms_thresh < 1:
            raise ValueError("nms_thresh must lie in (0, 1)")
        if not 0 < self.recv_box_score < 1:
            raise ValueError("recv_box_score must lie in (0, 1)")


def merge_clouds(ego_cloud, point_msgs) -> np.ndarray:
    parts = [as_point_array(ego_cloud)] + [as_point_array(m)[:, :POINT_DIM] for m in point_msgs]
    parts = [p for p in parts if len(p)]
    if not parts:
        return np.zeros((0, POINT_DIM))
    return np.vstack(parts).astype(float, copy=False)


def fuse_early(ego_cloud, point_msgs, objects, profile: DetectorProfile, rng: np.random.Generator,
               fp_region=DEFAULT_FP_REGION) -> DetectionSet:
    """Re-run the detector on the ego cloud united with received points.

    ``point_msgs`` must already be in the ego frame.
    """
    return detect(merge_clouds(ego_cloud, point_msgs), objects, profile, rng, fp_region=fp_region)


def fuse_late(local: DetectionSet, box_msgs, cfg: FusionConfig | None = None) -> DetectionSet:
    """Union local detections with received boxes and suppress duplicates.

    Received boxes carry no confidence and take ``cfg.recv_box_score``.
    Local detections come first in the union, so they win score ties.
    """
    cfg = cfg or FusionConfig()
    recv = [as_box_array(m) for m in box_msgs]
    recv = [r for r in recv if len(r)]
    if recv:
        boxes = np.vstack(recv).astype(float)
        received = DetectionSet(boxes, np.full(len(boxes), cfg.recv_box_score), np.zeros((len(boxes), 2)))
        merged = DetectionSet.concat(local, received)
    else:
        merged = local
    if len(merged) == 0:
        return DetectionSet.empty()
    return merged.take(nms(merged.boxes, merged.scores, cfg.nms_thresh))

