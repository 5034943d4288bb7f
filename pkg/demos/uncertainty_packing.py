"""How one sender splits its budget between boxes and points.

Shows the box/point split, the expanded regions around uncertain boxes
and how much of the point budget lands on foreground.
"""

import numpy as np

from hycomm import WorldConfig, allocate_budget, generate_world, pack_hybrid
from hycomm.messaging import expand_boxes, weight_points
from hycomm.strategies import TrialContext

world = generate_world(WorldConfig(seed=3))
ctx = TrialContext(world)
sender = world.neighbors[0][0]
dets = ctx.local(sender)
cloud = ctx.cloud(sender)
print(f"sender {sender}: {len(dets)} detections, {len(cloud)} lidar points")

for budget in (50, 200, 800, 3200):
    split = allocate_budget(budget, len(dets))
    print(f"budget {budget:5d} floats -> {split.b_box} boxes, {split.b_point} points")

order = np.argsort(-dets.scores)[:5]
grown = expand_boxes(dets)
for i in order:
    print(f"  conf {dets.scores[i]:.2f}  var {dets.variances[i].sum():.3f}  "
          f"size {dets.boxes[i, 3]:.2f}x{dets.boxes[i, 4]:.2f} -> {grown[i, 3]:.2f}x{grown[i, 4]:.2f}")

weights = weight_points(cloud, grown, dets)
foreground = weights > weights.min()
print(f"{foreground.mean():.1%} of the cloud lies inside an expanded box")

for weighting in ("uncertainty", "uniform"):
    msg = pack_hybrid(dets, cloud, 3200, None, np.random.default_rng(0), send_boxes=False, weighting=weighting)
    hit = weight_points(msg.points.astype(float), grown, dets) > weights.min()
    print(f"{weighting:12s} sampling: {hit.mean():.1%} of {msg.n_points} sent points are foreground")
