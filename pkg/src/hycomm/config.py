"""Experiment configuration: one JSON document fully determines a sweep.

Every section maps onto a library dataclass. Missing keys take their
defaults; unknown keys, wrong types and invalid values raise
:class:`ConfigError` naming the offending key as a dotted path.
"""

from __future__ import annotations

import json
import re
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

from .detector import DetectorProfile
from .fusion import FusionConfig
from .messaging import PackerConfig
from .scenario import SensorConfig, WorldConfig
from .strategies import ALL_STRATEGIES, RunSettings, UnknownStrategyError, parse_strategy

DEFAULT_BUDGETS = (50, 200, 800, 3200, 12800)


class ConfigError(ValueError):
    """The experiment configuration is malformed or invalid."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    profiles: tuple = (DetectorProfile(),)
    hetero: bool = False
    packer: PackerConfig = field(default_factory=PackerConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    strategies: tuple = ALL_STRATEGIES
    budgets_floats: tuple = DEFAULT_BUDGETS
    n_trials: int = 200
    pose_sigma: float = 0.0
    pose_sigma_yaw: float | None = None
    master_seed: int = 0
    ego_id: int = 0
    switch_threshold: int = 2000

    @property
    def settings(self) -> RunSettings:
        return RunSettings(packer=self.packer, fusion=self.fusion, switch_threshold=self.switch_threshold)

    def to_dict(self) -> dict:
        doc = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "profiles":
                v = [asdict(p) for p in v]
            elif hasattr(v, "__dataclass_fields__"):
                v = asdict(v)
            elif isinstance(v, tuple):
                v = list(v)
            doc[f.name] = v
        return json.loads(json.dumps(doc))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# ---------------------------------------------------------------------------
# parsing


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_value(key: str, value, default):
    """Type-check ``value`` against the shape of a field's default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
    elif isinstance(default, int):
        if not _is_int(value):
            raise ConfigError(key, f"expected an integer, got {value!r}")
    elif isinstance(default, float):
        if not _is_number(value):
            raise ConfigError(key, f"expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
    elif isinstance(default, tuple):
        if _is_number(value):
            return value
        if not isinstance(value, list) or len(value) != len(default) or not all(map(_is_number, value)):
            raise ConfigError(key, f"expected a list of {len(default)} numbers, got {value!r}")
        value = tuple(value)
    elif isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(key, f"expected an object, got {value!r}")
        for k, v in value.items():
            if k not in default:
                raise ConfigError(f"{key}.{k}", "unknown key")
            _check_value(f"{key}.{k}", v, default[k])
    elif default is None:
        if value is not None and not _is_number(value):
            raise ConfigError(key, f"expected a number or null, got {value!r}")
    return value


def _build(cls, doc, key: str):
    if not isinstance(doc, dict):
        raise ConfigError(key, f"expected an object, got {type(doc).__name__}")
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for k, v in doc.items():
        if k not in known:
            raise ConfigError(f"{key}.{k}", "unknown key")
        f = known[k]
        default = f.default if f.default is not MISSING else f.default_factory()
        kwargs[k] = _check_value(f"{key}.{k}", v, default)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        bad = next((k for k in kwargs if k in str(exc)), None)
        raise ConfigError(f"{key}.{bad}" if bad else key, str(exc)) from None


def config_from_dict(doc) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("", "config must be a JSON object")
    defaults = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    for k in doc:
        if k not in known:
            raise ConfigError(k, "unknown key")

    kw = {}
    for name, cls in (("world", WorldConfig), ("sensor", SensorConfig), ("packer", PackerConfig),
                      ("fusion", FusionConfig)):
        if name in doc:
            kw[name] = _build(cls, doc[name], name)

    if "profiles" in doc:
        raw = doc["profiles"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("profiles", "expected a non-empty list of detector profiles")
        kw["profiles"] = tuple(_build(DetectorProfile, p, f"profiles[{i}]") for i, p in enumerate(raw))

    if "strategies" in doc:
        raw = doc["strategies"]
        if not isinstance(raw, list) or not raw:
            raise ConfigError("strategies", "expected a non-empty list of strategy ids")
        out = []
        for i, s in enumerate(raw):
            try:
                out.append(parse_strategy(s).value)
            except UnknownStrategyError as exc:
                raise ConfigError(f"strategies[{i}]", str(exc)) from None
        if len(set(out)) != len(out):
            raise ConfigError("strategies", "duplicate strategy ids")
        kw["strategies"] = tuple(out)

    if "budgets_floats" in doc:
        raw = doc["budgets_floats"]
        if not isinstance(raw, list) or not raw or not all(map(_is_int, raw)):
            raise ConfigError("budgets_floats", "expected a non-empty list of integers")
        if raw[0] < 0:
            raise ConfigError("budgets_floats", "budgets must be non-negative")
        if any(b <= a for a, b in zip(raw, raw[1:])):
            raise ConfigError("budgets_floats", "budgets must be strictly increasing")
        kw["budgets_floats"] = tuple(raw)

    for name in ("hetero", "n_trials", "pose_sigma", "pose_sigma_yaw", "master_seed", "ego_id",
                 "switch_threshold"):
        if name in doc:
            kw[name] = _check_value(name, doc[name], getattr(defaults, name))
    if kw.get("n_trials", 1) < 1:
        raise ConfigError("n_trials", "must be >= 1")
    for name in ("pose_sigma", "pose_sigma_yaw"):
        if (kw.get(name) or 0) < 0:
            raise ConfigError(name, "must be non-negative")
    if kw.get("switch_threshold", 0) < 0:
        raise ConfigError("switch_threshold", "must be non-negative")

    cfg = ExperimentConfig(**kw)
    if not 0 <= cfg.ego_id < cfg.world.n_agents:
        raise ConfigError("ego_id", f"must name one of the {cfg.world.n_agents} agents")
    return cfg


def _key_before(text: str, pos: int) -> str | None:
    keys = re.findall(r'"([^"\\]+)"\s*:', text[:pos])
    return keys[-1] if keys else None


def loads_config(text: str) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        key = _key_before(text, exc.pos)
        where = f"line {exc.lineno} column {exc.colno}"
        raise ConfigError(key or "", f"malformed JSON near {where}: {exc.msg}") from None
    return config_from_dict(doc)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read config {path}: {exc.strerror}") from None
    return loads_config(text)


def default_config_json() -> str:
    return ExperimentConfig().dumps()
