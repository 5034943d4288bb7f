"""Collaboration strategies and the paired-seed trial matrix.

Every strategy maps ``(scenario, ego, budget)`` to the ego's final
detections plus the volume it received. All random streams are derived
from the world seed alone (see :func:`hycomm.scenario.derive_rng`), so
strategies and budgets run on one trial see the same world, the same sensor
returns, the same local detections and the same sampling noise.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from .detector import DEFAULT_FP_REGION, DetectionSet, DetectorProfile, detect, heterogeneous_profiles
from .evaluation import VolumeReport, communication_volume, evaluate
from .fusion import FusionConfig, fuse_early, fuse_late
from .geometry import BOX_DIM, PlanarPose
from .messaging import HybridMessage, PackerConfig, pack_box_message, pack_hybrid
from .scenario import (
    DETECT,
    LIDAR,
    POSE,
    SAMPLE,
    Scenario,
    SensorConfig,
    WorldConfig,
    derive_rng,
    derive_seed,
    express_message_in_ego,
    generate_world,
    perturb_pose,
    simulate_lidar,
)


class StrategyId(str, Enum):
    NO_COLLAB = "no_collab"
    LATE_ALL = "late_all"
    EARLY_RANDOM = "early_random"
    HEURISTIC_SWITCH = "heuristic_switch"
    HYCOMM = "hycomm"
    HYCOMM_POINT_ONLY = "hycomm_point_only"
    POINT_ONLY_UNIFORM = "point_only_uniform"
    HYCOMM_NO_EXPAND = "hycomm_no_expand"
    HYCOMM_NO_REWEIGHT = "hycomm_no_reweight"


ALL_STRATEGIES = tuple(s.value for s in StrategyId)


class UnknownStrategyError(ValueError):
    pass


def parse_strategy(strategy) -> StrategyId:
    try:
        return StrategyId(strategy)
    except ValueError:
        raise UnknownStrategyError(
            f"unknown strategy {strategy!r}; expected one of {', '.join(ALL_STRATEGIES)}"
        ) from None


@dataclass(frozen=True)
class RunSettings:
    """Knobs shared by every strategy run."""

    packer: PackerConfig = field(default_factory=PackerConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    # 500 points' worth of floats
    switch_threshold: int = 2000
    fp_region: tuple = DEFAULT_FP_REGION


class StrategyOutcome(NamedTuple):
    detections: DetectionSet
    volume: VolumeReport
    messages: list
    senders: tuple = ()


def profile_for(profiles, agent_index: int) -> DetectorProfile:
    return profiles[agent_index % len(profiles)]


class TrialContext:
    """Lazily computed, strategy-independent state of one trial."""

    def __init__(self, scenario: Scenario, profiles=None, fp_region=DEFAULT_FP_REGION):
        self.scenario = scenario
        self.profiles = list(profiles or [DetectorProfile()])
        self.fp_region = fp_region
        self._clouds: dict[int, np.ndarray] = {}
        self._objects: dict[int, np.ndarray] = {}
        self._local: dict[int, DetectionSet] = {}

    def index(self, agent_id: int) -> int:
        return self.scenario.agent_index(agent_id)

    def pose(self, agent_id: int) -> PlanarPose:
        return self.scenario.agent(agent_id).pose

    def cloud(self, agent_id: int) -> np.ndarray:
        if agent_id not in self._clouds:
            rng = derive_rng(self.scenario.seed, LIDAR, self.index(agent_id))
            self._clouds[agent_id] = simulate_lidar(self.scenario, agent_id, rng)
        return self._clouds[agent_id]

    def objects(self, agent_id: int) -> np.ndarray:
        """Ground-truth boxes in the agent's frame."""
        if agent_id not in self._objects:
            self._objects[agent_id] = self.scenario.objects_in_frame(self.pose(agent_id))
        return self._objects[agent_id]

    def profile(self, agent_id: int) -> DetectorProfile:
        return profile_for(self.profiles, self.index(agent_id))

    def detect_rng(self, agent_id: int) -> np.random.Generator:
        return derive_rng(self.scenario.seed, DETECT, self.index(agent_id))

    def sample_rng(self, agent_id: int) -> np.random.Generator:
        return derive_rng(self.scenario.seed, SAMPLE, self.index(agent_id))

    def local(self, agent_id: int) -> DetectionSet:
        if agent_id not in self._local:
            self._local[agent_id] = detect(
                self.cloud(agent_id), self.objects(agent_id), self.profile(agent_id),
                self.detect_rng(agent_id), fp_region=self.fp_region,
            )
        return self._local[agent_id]

    def believed_pose(self, agent_id: int, sigma_xy: float, sigma_yaw: float) -> PlanarPose:
        pose = self.pose(agent_id)
        if sigma_xy == 0 and sigma_yaw == 0:
            return pose
        rng = derive_rng(self.scenario.seed, POSE, self.index(agent_id))
        return perturb_pose(pose, sigma_xy, sigma_yaw, rng)


def _late_message(local: DetectionSet, budget: int, pose: PlanarPose) -> HybridMessage:
    if budget >= BOX_DIM * len(local):
        return HybridMessage(pack_box_message(local, np.ones(len(local), bool)), sender_pose=pose)
    return HybridMessage(sender_pose=pose)


def build_message(sid: StrategyId, ctx: TrialContext, sender_id: int, budget: int,
                  settings: RunSettings, pose: PlanarPose) -> HybridMessage:
    if sid is StrategyId.HEURISTIC_SWITCH:
        sid = StrategyId.EARLY_RANDOM if budget >= settings.switch_threshold else StrategyId.LATE_ALL
    local = ctx.local(sender_id)
    if sid is StrategyId.LATE_ALL:
        return _late_message(local, budget, pose)
    kwargs = {
        StrategyId.EARLY_RANDOM: dict(send_boxes=False, weighting="uniform"),
        StrategyId.POINT_ONLY_UNIFORM: dict(send_boxes=False, weighting="uniform"),
        StrategyId.HYCOMM: {},
        StrategyId.HYCOMM_POINT_ONLY: dict(send_boxes=False),
        StrategyId.HYCOMM_NO_EXPAND: dict(expand=False),
        StrategyId.HYCOMM_NO_REWEIGHT: dict(weighting="flat"),
    }[sid]
    return pack_hybrid(local, ctx.cloud(sender_id), budget, settings.packer, ctx.sample_rng(sender_id),
                       sender_pose=pose, **kwargs)


def run_strategy(strategy, scenario: Scenario, ego_id: int, budget: int, pose_sigma: float = 0.0,
                 profiles=None, *, pose_sigma_yaw: float | None = None, settings: RunSettings | None = None,
                 context: TrialContext | None = None) -> StrategyOutcome:
    """Final ego detections and received volume for one strategy.

    ``budget`` is in floats per collaborator link. ``pose_sigma`` perturbs
    every collaborator's broadcast pose in x, y and (unless
    ``pose_sigma_yaw`` is given) yaw.
    """
    sid = parse_strategy(strategy)
    settings = settings or RunSettings()
    if budget < 0:
        raise ValueError("budget must be non-negative")
    ctx = context or TrialContext(scenario, profiles, settings.fp_region)
    sigma_yaw = pose_sigma if pose_sigma_yaw is None else pose_sigma_yaw
    ego_pose = ctx.pose(ego_id)

    messages, senders = [], []
    if sid is not StrategyId.NO_COLLAB:
        for j in scenario.neighbors.get(ego_id, ()):
            pose = ctx.believed_pose(j, pose_sigma, sigma_yaw)
            m = build_message(sid, ctx, j, int(budget), settings, pose)
            # an empty message is not transmitted
            if m.n_boxes or m.n_points:
                messages.append(m)
                senders.append(j)

    box_msgs, point_msgs = [], []
    for m in messages:
        boxes, points = express_message_in_ego(m.boxes, m.points, m.sender_pose, ego_pose)
        if len(boxes):
            box_msgs.append(boxes)
        if len(points):
            point_msgs.append(points)

    if point_msgs:
        early = fuse_early(ctx.cloud(ego_id), point_msgs, ctx.objects(ego_id), ctx.profile(ego_id),
                           ctx.detect_rng(ego_id), fp_region=ctx.fp_region)
    else:
        # identical to re-detecting on the unchanged cloud with the same stream
        early = ctx.local(ego_id)
    final = fuse_late(early, box_msgs, settings.fusion)
    return StrategyOutcome(final, communication_volume(messages), messages, tuple(senders))


# ---------------------------------------------------------------------------
# trial matrix


@dataclass(frozen=True)
class SweepRow:
    strategy: str
    budget_floats: int
    volume_log2_bytes: float
    ap30: float
    ap50: float
    ap70: float
    ap30_sd: float
    ap50_sd: float
    ap70_sd: float
    n_trials: int
    seed: int


CSV_COLUMNS = tuple(SweepRow.__dataclass_fields__)
METRICS = ("ap30", "ap50", "ap70")


@dataclass
class SweepReport:
    """Aggregated rows plus the per-trial values behind them.

    ``trials[(strategy, budget)]`` is an ``(n_trials, 4)`` array of
    ``ap30, ap50, ap70, log2_bytes`` in trial order.
    """

    rows: list
    trials: dict
    master_seed: int

    def values(self, strategy: str, budget: int, metric: str = "ap50") -> np.ndarray:
        col = METRICS.index(metric) if metric in METRICS else 3
        return self.trials[(strategy, budget)][:, col]

    def mean(self, strategy: str, budget: int, metric: str = "ap50") -> float:
        return float(np.mean(self.values(strategy, budget, metric)))

    def paired_diff(self, a: str, b: str, budget: int, metric: str = "ap50") -> np.ndarray:
        return self.values(a, budget, metric) - self.values(b, budget, metric)

    def row(self, strategy: str, budget: int) -> SweepRow:
        for r in self.rows:
            if r.strategy == strategy and r.budget_floats == budget:
                return r
        raise KeyError((strategy, budget))


@dataclass(frozen=True)
class MatrixSpec:
    strategies: tuple
    budgets: tuple
    world: WorldConfig
    sensor: SensorConfig
    profiles: tuple
    settings: RunSettings
    pose_sigma: float
    pose_sigma_yaw: float | None
    master_seed: int
    ego_id: int = 0


def world_seed(master_seed: int, trial_index: int) -> int:
    return derive_seed(master_seed, trial_index)


def run_trial(spec: MatrixSpec, trial_index: int) -> dict:
    """AP and log2 volume for every (strategy, budget) on one world."""
    cfg = replace(spec.world, seed=world_seed(spec.master_seed, trial_index))
    scenario = generate_world(cfg, spec.sensor)
    ctx = TrialContext(scenario, spec.profiles, spec.settings.fp_region)
    gts = ctx.objects(spec.ego_id)
    out = {}
    baseline = None
    for s in spec.strategies:
        for b in spec.budgets:
            if s == StrategyId.NO_COLLAB.value and baseline is not None:
                out[(s, b)] = baseline
                continue
            res = run_strategy(s, scenario, spec.ego_id, b, spec.pose_sigma, pose_sigma_yaw=spec.pose_sigma_yaw,
                               settings=spec.settings, context=ctx)
            ap = evaluate(res.detections, gts)
            out[(s, b)] = (*ap.as_tuple(), res.volume.log2_bytes)
            if s == StrategyId.NO_COLLAB.value:
                baseline = out[(s, b)]
    return out


def _run_trial_star(args):
    return run_trial(*args)


def run_trial_matrix(strategies, budgets, n_trials: int, master_seed: int, pose_sigma: float = 0.0,
                     hetero: bool = False, *, world: WorldConfig | None = None, sensor: SensorConfig | None = None,
                     profiles=None, settings: RunSettings | None = None, pose_sigma_yaw: float | None = None,
                     jobs: int = 1, ego_id: int = 0) -> SweepReport:
    """Paired-seed sweep over strategies x budgets x trials.

    Trial ``t`` uses world seed ``derive_seed(master_seed, t)`` for every
    strategy and budget. With ``hetero`` each agent gets its own detector
    preset; otherwise every agent uses ``profiles[0]`` (default profile if
    omitted).
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    strategies = tuple(parse_strategy(s).value for s in strategies)
    budgets = tuple(int(b) for b in budgets)
    world = world or WorldConfig()
    if hetero:
        profiles = tuple(profiles) if profiles and len(profiles) > 1 else tuple(heterogeneous_profiles(world.n_agents))
    else:
        profiles = (profiles[0] if profiles else DetectorProfile(),)
    spec = MatrixSpec(strategies, budgets, world, sensor or SensorConfig(), profiles, settings or RunSettings(),
                      float(pose_sigma), pose_sigma_yaw, int(master_seed), ego_id)

    args = [(spec, t) for t in range(n_trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial_star, args, chunksize=max(1, n_trials // (4 * jobs))))
    else:
        results = [run_trial(*a) for a in args]

    trials = {}
    rows = []
    for s in strategies:
        for b in budgets:
            vals = np.array([r[(s, b)] for r in results], dtype=float)
            trials[(s, b)] = vals
            mean = vals.mean(axis=0)
            sd = vals[:, :3].std(axis=0, ddof=1) if n_trials > 1 else np.zeros(3)
            rows.append(SweepRow(s, b, float(mean[3]), *map(float, mean[:3]), *map(float, sd),
                                 n_trials, int(master_seed)))
    return SweepReport(rows, trials, int(master_seed))


__all__ = [
    "ALL_STRATEGIES",
    "CSV_COLUMNS",
    "RunSettings",
    "StrategyId",
    "StrategyOutcome",
    "SweepReport",
    "SweepRow",
    "TrialContext",
    "UnknownStrategyError",
    "build_message",
    "run_strategy",
    "run_trial_matrix",
    "world_seed",
]
