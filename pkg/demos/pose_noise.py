"""Localization error against the value of collaboration.

Collaborators broadcast noisy poses, so their boxes and points land in
the wrong place in the ego frame. AP50 falls as the noise grows.
"""

from hycomm.strategies import run_trial_matrix

BUDGET = 3200
base = run_trial_matrix(["no_collab"], [BUDGET], 20, master_seed=0).mean("no_collab", BUDGET)
print(f"no collaboration: AP50 {base:.3f}")
for sigma in (0.0, 0.1, 0.2, 0.4, 0.6):
    r = run_trial_matrix(["hycomm", "late_all"], [BUDGET], 20, master_seed=0, pose_sigma=sigma)
    print(f"pose sigma {sigma:.1f}: hycomm {r.mean('hycomm', BUDGET):.3f}  late_all {r.mean('late_all', BUDGET):.3f}")
