"""One world, one ego, every strategy at one budget.

Generates a three-vehicle scene, runs each collaboration strategy for the
ego at 800 floats per link and prints AP at three IoU thresholds next to
the bytes the ego received.
"""

from hycomm import StrategyId, WorldConfig, evaluate, generate_world, run_strategy
from hycomm.strategies import TrialContext

BUDGET = 800

world = generate_world(WorldConfig(seed=7))
ctx = TrialContext(world)
ego = 0
truth = ctx.objects(ego)
print(f"{len(world.objects)} objects, {len(world.agents)} agents, ego sees {len(truth)} in range")
print(f"{'strategy':22s} {'AP30':>6s} {'AP50':>6s} {'AP70':>6s} {'bytes':>7s}")
for sid in StrategyId:
    out = run_strategy(sid, world, ego, BUDGET, context=ctx)
    ap = evaluate(out.detections, truth)
    print(f"{sid.value:22s} {ap.ap30:6.3f} {ap.ap50:6.3f} {ap.ap70:6.3f} {out.volume.payload_bytes:7d}")
