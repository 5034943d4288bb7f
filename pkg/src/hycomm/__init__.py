"""Hybrid box + point collaboration for bandwidth-limited multi-agent 3D detection."""

from .detector import Detection, DetectionSet, DetectorProfile, detect, heterogeneous_profiles
from .evaluation import ApResult, VolumeReport, average_precision, communication_volume, evaluate
from .fusion import FusionConfig, fuse_early, fuse_late
from .geometry import OrientedBox3, PlanarPose, Point3, nms, rotated_iou_bev
from .messaging import HybridMessage, PackerConfig, allocate_budget, deserialize, pack_hybrid, serialize
from .scenario import Scenario, SensorConfig, WorldConfig, generate_world, simulate_lidar
from .strategies import StrategyId, run_strategy, run_trial_matrix

__version__ = "0.1.0"
