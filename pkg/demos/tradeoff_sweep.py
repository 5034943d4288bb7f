"""Accuracy against bandwidth for the main strategies.

A small paired sweep (every strategy sees the same worlds) over the
default budgets. Writes tradeoff.svg next to this script.
"""

from pathlib import Path

from hycomm.plotting import tradeoff_svg
from hycomm.strategies import run_trial_matrix

STRATEGIES = ["no_collab", "late_all", "early_random", "hycomm"]
BUDGETS = [50, 200, 800, 3200, 12800]

report = run_trial_matrix(STRATEGIES, BUDGETS, n_trials=20, master_seed=0)
for b in BUDGETS:
    cells = "  ".join(f"{s}={report.mean(s, b):.3f}" for s in STRATEGIES)
    print(f"B={b:6d}  AP50  {cells}")

d = report.paired_diff("hycomm", "early_random", 800)
print(f"hycomm - early_random at 800 floats: {d.mean():+.4f} over {len(d)} paired trials")

out = Path(__file__).with_name("tradeoff.svg")
out.write_text(tradeoff_svg(report.rows, title="AP50 vs communication volume"))
print(f"wrote {out}")
