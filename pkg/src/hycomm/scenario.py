"""Synthetic multi-agent worlds and a 2D ray-cast LiDAR.

Objects are boxes standing on a flat ground plane (``z = 0``). Each agent
carries a spinning sensor that casts ``n_rays`` bearings; a bearing returns
at most one surface point per vertical channel, at the nearest footprint
edge it crosses. Free ground in front of that first hit may return clutter.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import (
    OrientedBox3,
    PlanarPose,
    as_box_array,
    box_corners_bev,
    footprint_distance,
    normalize_angle,
    points_in_boxes,
    transform_boxes,
    transform_points,
)

MAX_PLACEMENT_ATTEMPTS = 10_000

# stream ids for derive_rng
WORLD, LIDAR, DETECT, SAMPLE, POSE = range(5)


class PlacementInfeasibleError(RuntimeError):
    """Raised when objects cannot be placed under the gap constraint."""


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """An independent generator for ``(seed, *keys)``.

    Streams are split with :class:`numpy.random.SeedSequence`, so any two
    distinct key tuples give statistically independent draws.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *keys]))


def derive_seed(seed: int, *keys: int) -> int:
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *keys]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


@dataclass(frozen=True)
class SensorConfig:
    n_rays: int = 720
    n_channels: int = 4
    max_range: float = 80.0
    range_noise_sigma: float = 0.02
    background_rate: float = 0.06
    z_mount: float = 1.8

    def __post_init__(self):
        if self.n_rays < 1 or self.n_channels < 1:
            raise ValueError("n_rays and n_channels must be >= 1")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")
        if self.range_noise_sigma < 0 or self.background_rate < 0:
            raise ValueError("noise sigma and background rate must be non-negative")

    @property
    def blind_radius(self) -> float:
        # ground is first reached by the lowest beam, 15 degrees down
        return self.z_mount / math.tan(math.radians(15.0))


def _as_range(v, name: str) -> tuple[float, float]:
    lo, hi = (v, v) if np.isscalar(v) else tuple(v)
    if lo > hi:
        raise ValueError(f"{name} is empty: {v}")
    return float(lo), float(hi)


@dataclass(frozen=True)
class WorldConfig:
    x_range: tuple = (-100.0, 100.0)
    y_range: tuple = (-40.0, 40.0)
    n_objects: tuple = (30, 30)
    n_agents: int = 3
    object_size_ranges: dict = field(
        default_factory=lambda: {"l": (3.6, 4.8), "w": (1.6, 2.0), "h": (1.4, 1.8)}
    )
    min_gap: float = 1.0
    seed: int = 0
    agent_x_range: tuple = (-50.0, 50.0)
    agent_y_range: tuple = (-30.0, 30.0)
    agent_clearance: float = 3.0
    comm_range: float | None = None
    ego_at_origin: bool = True

    def __post_init__(self):
        for name in ("x_range", "y_range", "agent_x_range", "agent_y_range"):
            object.__setattr__(self, name, _as_range(getattr(self, name), name))
        lo, hi = _as_range(self.n_objects, "n_objects")
        if lo < 0:
            raise ValueError("n_objects must be non-negative")
        object.__setattr__(self, "n_objects", (int(lo), int(hi)))
        sizes = {k: _as_range(self.object_size_ranges[k], k) for k in ("l", "w", "h")}
        if min(r[0] for r in sizes.values()) <= 0:
            raise ValueError("object sizes must be positive")
        object.__setattr__(self, "object_size_ranges", sizes)
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.min_gap < 0 or self.agent_clearance < 0:
            raise ValueError("min_gap and agent_clearance must be non-negative")


@dataclass(frozen=True)
class AgentSpec:
    id: int
    pose: PlanarPose
    sensor: SensorConfig


@dataclass(frozen=True)
class Scenario:
    objects: tuple  # of (id, OrientedBox3)
    agents: tuple  # of AgentSpec
    neighbors: dict  # agent id -> tuple of neighbor ids
    seed: int

    def agent(self, agent_id: int) -> AgentSpec:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(f"no agent with id {agent_id}")

    def agent_index(self, agent_id: int) -> int:
        for i, a in enumerate(self.agents):
            if a.id == agent_id:
                return i
        raise KeyError(f"no agent with id {agent_id}")

    def object_array(self) -> np.ndarray:
        return as_box_array([b for _, b in self.objects])

    def objects_in_frame(self, pose: PlanarPose) -> np.ndarray:
        return transform_boxes(self.object_array(), PlanarPose(0.0, 0.0, 0.0), pose)

    # JSON snapshot ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "objects": [{"id": oid, "box": asdict(b)} for oid, b in self.objects],
            "agents": [
                {"id": a.id, "pose": asdict(a.pose), "sensor": asdict(a.sensor)} for a in self.agents
            ],
            "neighbors": {str(k): list(v) for k, v in self.neighbors.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        objects = tuple((int(o["id"]), OrientedBox3(**o["box"])) for o in doc["objects"])
        agents = tuple(
            AgentSpec(int(a["id"]), PlanarPose(**a["pose"]), SensorConfig(**a.get("sensor", {})))
            for a in doc["agents"]
        )
        ids = [a.id for a in agents]
        if "neighbors" in doc:
            neighbors = {int(k): tuple(int(j) for j in v) for k, v in doc["neighbors"].items()}
        else:
            neighbors = {i: tuple(j for j in ids if j != i) for i in ids}
        return cls(objects, agents, neighbors, int(doc["seed"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# world generation


def _sample_pose(rng, xr, yr) -> PlanarPose:
    return PlanarPose(rng.uniform(*xr), rng.uniform(*yr), rng.uniform(-math.pi, math.pi))


def generate_world(cfg: WorldConfig, sensor: SensorConfig | None = None) -> Scenario:
    """Place agents, then rejection-sample objects until the gap constraint holds.

    Raises PlacementInfeasibleError after MAX_PLACEMENT_ATTEMPTS rejected draws.
    """
    sensor = sensor or SensorConfig()
    rng = derive_rng(cfg.seed, WORLD)

    poses = []
    for i in range(cfg.n_agents):
        if i == 0 and cfg.ego_at_origin:
            poses.append(PlanarPose(0.0, 0.0, 0.0))
        else:
            poses.append(_sample_pose(rng, cfg.agent_x_range, cfg.agent_y_range))
    agents = tuple(AgentSpec(i, p, sensor) for i, p in enumerate(poses))
    agent_xy = np.array([[p.x, p.y, 0.0] for p in poses])

    n_target = int(rng.integers(cfg.n_objects[0], cfg.n_objects[1] + 1))
    sizes = cfg.object_size_ranges
    placed: list[np.ndarray] = []
    radii: list[float] = []
    attempts = 0
    while len(placed) < n_target:
        if attempts >= MAX_PLACEMENT_ATTEMPTS:
            raise PlacementInfeasibleError(
                f"placed {len(placed)} of {n_target} objects after {attempts} attempts; "
                "lower n_objects or min_gap"
            )
        attempts += 1
        l, w, h = (rng.uniform(*sizes[k]) for k in ("l", "w", "h"))
        box = np.array(
            [rng.uniform(*cfg.x_range), rng.uniform(*cfg.y_range), h / 2, l, w, h, rng.uniform(-math.pi, math.pi)]
        )
        corners = box_corners_bev(box)[0]
        if (corners[:, 0].min() < cfg.x_range[0] or corners[:, 0].max() > cfg.x_range[1]
                or corners[:, 1].min() < cfg.y_range[0] or corners[:, 1].max() > cfg.y_range[1]):
            continue
        probe = agent_xy.copy()
        probe[:, 2] = h / 2
        if points_in_boxes(probe, box, margin=cfg.agent_clearance).any():
            continue
        r = 0.5 * math.hypot(l, w)
        ok = True
        for other, r_other in zip(placed, radii):
            if math.hypot(box[0] - other[0], box[1] - other[1]) >= r + r_other + cfg.min_gap:
                continue
            if footprint_distance(box, other) < cfg.min_gap:
                ok = False
                break
        if ok:
            placed.append(box)
            radii.append(r)

    objects = tuple((i, OrientedBox3.from_array(b)) for i, b in enumerate(placed))
    neighbors = {}
    for a in agents:
        nb = []
        for b in agents:
            if b.id == a.id:
                continue
            d = math.hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y)
            if cfg.comm_range is None or d <= cfg.comm_range:
                nb.append(b.id)
        neighbors[a.id] = tuple(nb)
    return Scenario(objects, agents, neighbors, int(cfg.seed))


# ---------------------------------------------------------------------------
# LiDAR


def cast_rays(boxes_local: np.ndarray, bearings: np.ndarray, max_range: float):
    """Nearest footprint-edge hit for each bearing from the origin.

    Returns ``(ranges, box_index)``; bearings without a hit within
    ``max_range`` get ``inf`` and ``-1``.
    """
    n = len(bearings)
    if len(boxes_local) == 0:
        return np.full(n, np.inf), np.full(n, -1)
    corners = box_corners_bev(boxes_local)  # (K, 4, 2)
    p = corners.reshape(-1, 2)
    q = np.roll(corners, -1, axis=1).reshape(-1, 2)
    e = q - p
    owner = np.repeat(np.arange(len(boxes_local)), 4)
    d = np.stack([np.cos(bearings), np.sin(bearings)], axis=1)  # (R, 2)

    denom = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (p[None, :, 0] * e[None, :, 1] - p[None, :, 1] * e[None, :, 0]) / denom
        s = (p[None, :, 0] * d[:, None, 1] - p[None, :, 1] * d[:, None, 0]) / denom
    valid = (np.abs(denom) > 1e-12) & (t > 0) & (s >= 0) & (s <= 1) & (t <= max_range)
    t = np.where(valid, t, np.inf)
    best = np.argmin(t, axis=1)
    ranges = t[np.arange(n), best]
    hit_box = np.where(np.isfinite(ranges), owner[best], -1)
    return ranges, hit_box


def simulate_lidar(s: Scenario, agent_id: int, rng: np.random.Generator | None = None,
                   return_labels: bool = False):
    """Point cloud ``(P, 4)`` of ``(x, y, z, intensity)`` in the agent's frame.

    With ``return_labels`` also returns the bearing index and the struck
    object index (``-1`` for ground clutter) of every point.
    """
    idx = s.agent_index(agent_id)
    agent = s.agents[idx]
    cfg = agent.sensor
    if rng is None:
        rng = derive_rng(s.seed, LIDAR, idx)

    boxes = s.objects_in_frame(agent.pose)
    bearings = 2.0 * math.pi * np.arange(cfg.n_rays) / cfg.n_rays
    ranges, hit_box = cast_rays(boxes, bearings, cfg.max_range)

    # surface returns: one per channel on every bearing that hit
    hit_rays = np.nonzero(hit_box >= 0)[0]
    ray_idx = np.repeat(hit_rays, cfg.n_channels)
    obj_idx = hit_box[ray_idx]
    m = len(ray_idx)
    noise = np.clip(rng.standard_normal(m) * cfg.range_noise_sigma,
                    -3 * cfg.range_noise_sigma, 3 * cfg.range_noise_sigma)
    r = ranges[ray_idx] + noise
    hb = boxes[obj_idx] if m else np.zeros((0, 7))
    z = hb[:, 2] - hb[:, 5] / 2 + rng.random(m) * hb[:, 5]
    surface = np.column_stack([
        r * np.cos(bearings[ray_idx]),
        r * np.sin(bearings[ray_idx]),
        z,
        rng.uniform(0.3, 0.9, m),
    ])

    # ground clutter strictly in front of the first hit
    r0 = cfg.blind_radius
    free = np.minimum(ranges, cfg.max_range)
    dtheta = 2.0 * math.pi / cfg.n_rays
    area = 0.5 * dtheta * np.clip(free**2 - r0**2, 0.0, None)
    counts = rng.poisson(cfg.background_rate * area)
    g_ray = np.repeat(np.arange(cfg.n_rays), counts)
    g = len(g_ray)
    g_r = np.sqrt(r0**2 + rng.random(g) * (free[g_ray] ** 2 - r0**2))
    ground = np.column_stack([
        g_r * np.cos(bearings[g_ray]),
        g_r * np.sin(bearings[g_ray]),
        -0.01 - np.abs(rng.standard_normal(g)) * 0.02,
        rng.uniform(0.0, 0.15, g),
    ])

    cloud = np.vstack([surface, ground]) if g else surface
    if not return_labels:
        return cloud
    return cloud, np.concatenate([ray_idx, g_ray]), np.concatenate([obj_idx, np.full(g, -1)])


# ---------------------------------------------------------------------------
# pose noise and frame alignment


def perturb_pose(p: PlanarPose, sigma_xy: float, sigma_yaw: float, rng: np.random.Generator) -> PlanarPose:
    if sigma_xy < 0 or sigma_yaw < 0:
        raise ValueError("pose noise sigmas must be non-negative")
    z = rng.standard_normal(3)
    return PlanarPose(p.x + sigma_xy * z[0], p.y + sigma_xy * z[1], p.yaw + sigma_yaw * z[2])


def express_message_in_ego(boxes, points, sender_pose: PlanarPose, ego_pose: PlanarPose):
    """Move sender-frame box and point records into the ego frame."""
    return transform_boxes(boxes, sender_pose, ego_pose), transform_points(points, sender_pose, ego_pose)


def with_sensor(s: Scenario, sensor: SensorConfig) -> Scenario:
    """Same world with every agent's sensor replaced."""
    return replace(s, agents=tuple(replace(a, sensor=sensor) for a in s.agents))


__all__ = [
    "AgentSpec",
    "PlacementInfeasibleError",
    "Scenario",
    "SensorConfig",
    "WorldConfig",
    "cast_rays",
    "derive_rng",
    "derive_seed",
    "express_message_in_ego",
    "generate_world",
    "normalize_angle",
    "perturb_pose",
    "simulate_lidar",
    "with_sensor",
]
