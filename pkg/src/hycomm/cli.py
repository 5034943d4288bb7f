"""``hycomm gen|sweep|replay``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure
(placement infeasibility, I/O).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import astuple, replace
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, default_config_json, load_config
from .detector import DetectionSet, heterogeneous_profiles
from .messaging import HEADER_BYTES, serialize
from .plotting import tradeoff_svg
from .scenario import PlacementInfeasibleError, Scenario, generate_world
from .strategies import (
    CSV_COLUMNS,
    TrialContext,
    UnknownStrategyError,
    parse_strategy,
    run_strategy,
    run_trial_matrix,
    world_seed,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
SEED_ENV = "HYCOMM_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _load(path) -> ExperimentConfig:
    cfg = load_config(path) if path else ExperimentConfig()
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(SEED_ENV, f"expected an integer, got {env!r}") from None
        cfg = replace(cfg, master_seed=seed)
    return cfg


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ---------------------------------------------------------------------------
# commands


def cmd_gen(cfg: ExperimentConfig, out) -> Scenario:
    """Generate the first trial's world of ``cfg`` and write its JSON snapshot."""
    world = replace(cfg.world, seed=world_seed(cfg.master_seed, 0))
    scenario = generate_world(world, cfg.sensor)
    _write(out, json.dumps(scenario.to_dict(), indent=2) + "\n")
    return scenario


def sweep_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in report.rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(row)])
    return buf.getvalue()


def cmd_sweep(cfg: ExperimentConfig, out, svg=None, jobs: int = 1):
    report = run_trial_matrix(
        cfg.strategies, cfg.budgets_floats, cfg.n_trials, cfg.master_seed, cfg.pose_sigma, cfg.hetero,
        world=cfg.world, sensor=cfg.sensor, profiles=cfg.profiles, settings=cfg.settings,
        pose_sigma_yaw=cfg.pose_sigma_yaw, jobs=jobs, ego_id=cfg.ego_id,
    )
    _write(out, sweep_csv(report))
    if svg:
        Path(svg).write_text(tradeoff_svg(report.rows, title="AP50 vs communication volume"))
    return report


def _dets_json(d: DetectionSet) -> list:
    return [
        {"box": [float(v) for v in b], "score": float(c), "variance": [float(u[0]), float(u[1])]}
        for b, c, u in zip(d.boxes, d.scores, d.variances)
    ]


def replay(scenario: Scenario, strategy, budget: int, cfg: ExperimentConfig | None = None,
           seed: int | None = None) -> dict:
    """Everything the ego saw and decided in one run, as plain JSON data."""
    cfg = cfg or ExperimentConfig()
    if seed is not None:
        scenario = replace(scenario, seed=int(seed))
    sid = parse_strategy(strategy)
    profiles = list(cfg.profiles)
    if cfg.hetero and len(profiles) == 1:
        profiles = heterogeneous_profiles(len(scenario.agents))
    ego = cfg.ego_id
    try:
        scenario.agent(ego)
    except KeyError:
        raise ConfigError("ego_id", f"scenario has no agent {ego}") from None
    ctx = TrialContext(scenario, profiles, cfg.settings.fp_region)
    before = ctx.local(ego)
    res = run_strategy(sid, scenario, ego, budget, cfg.pose_sigma, pose_sigma_yaw=cfg.pose_sigma_yaw,
                       settings=cfg.settings, context=ctx)
    return {
        "strategy": sid.value,
        "budget_floats": int(budget),
        "seed": int(scenario.seed),
        "ego_id": int(ego),
        "detections_before": _dets_json(before),
        "detections_after": _dets_json(res.detections),
        "messages": [
            {
                "sender_id": int(j),
                "n_boxes": m.n_boxes,
                "n_points": m.n_points,
                "payload_bytes": m.payload_bytes,
                "frame_bytes": len(serialize(m)),
                "header_bytes": HEADER_BYTES,
            }
            for j, m in zip(res.senders, res.messages)
        ],
        "volume_bytes": res.volume.payload_bytes,
        "volume_log2_bytes": res.volume.log2_bytes,
    }


def _load_fixture(path) -> Scenario:
    try:
        return Scenario.load(path)
    except OSError as exc:
        raise ConfigError("", f"cannot read scenario {path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError("", f"invalid scenario fixture {path}: {exc!r}") from None


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment JSON (defaults apply when omitted)")
    common.add_argument("--out", metavar="PATH", help="output file (stdout when omitted)")

    p = _Parser(prog="hycomm", description="Hybrid box + point collaboration simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--print-default-config", action="store_true", help="print the default config JSON and exit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    sub.add_parser("gen", parents=[common], help="write the scenario snapshot of trial 0")

    sw = sub.add_parser("sweep", parents=[common], help="run the strategy x budget x trial matrix")
    sw.add_argument("--svg", metavar="PATH", help="also write the AP50 vs volume plot")
    sw.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes (default 1)")

    rp = sub.add_parser("replay", parents=[common], help="dump one run on a scenario snapshot")
    rp.add_argument("scenario", metavar="SCENARIO", help="JSON written by `hycomm gen`")
    rp.add_argument("--strategy", default="hycomm")
    rp.add_argument("--budget", type=int, default=800, help="floats per collaborator link")
    rp.add_argument("--seed", type=int, default=None, help="override the snapshot's stream seed")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(default_config_json())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        sys.stderr.write("hycomm: error: a command is required (gen, sweep or replay)\n")
        return EXIT_CONFIG
    try:
        cfg = _load(args.config)
        if args.command == "gen":
            cmd_gen(cfg, args.out)
        elif args.command == "sweep":
            if args.jobs < 1:
                raise ConfigError("--jobs", "must be >= 1")
            cmd_sweep(cfg, args.out, args.svg, args.jobs)
        else:
            if args.budget < 0:
                raise ConfigError("--budget", "must be non-negative")
            scenario = _load_fixture(args.scenario)
            dump = replay(scenario, args.strategy, args.budget, cfg, args.seed)
            _write(args.out, json.dumps(dump, indent=2) + "\n")
    except (ConfigError, UnknownStrategyError) as exc:
        sys.stderr.write(f"hycomm: config error: {exc}\n")
        return EXIT_CONFIG
    except PlacementInfeasibleError as exc:
        sys.stderr.write(f"hycomm: placement infeasible: {exc}\n")
        return EXIT_RUNTIME
    except OSError as exc:
        sys.stderr.write(f"hycomm: I/O error: {exc}\n")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
