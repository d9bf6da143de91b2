"""How many paths does it take to see the exercise boundary?

At date 45 of the demo put we plot (as CSV) the sample objective, the mean
discounted payoff of exercising below a candidate price S' and holding above
it, for 100 values of S' and four sample sizes.  With 100 paths the curve is
a jagged staircase whose peak can land anywhere; by 10^5 paths it is smooth
and peaks near the tree's critical price.

Run:  python demos/02_objective_sweep.py [out_dir]
"""

import sys

import numpy as np

from mcamerican import objective_sweep
from mcamerican.study import DEMO_STEP, demo_tree_boundary, sweep_point

out = sys.argv[1] if len(sys.argv) > 1 else "sweep-out"
summary = objective_sweep(out, seed=0)
print(f"tree critical price at date {DEMO_STEP}: {summary['tree_boundary']:.3f}")
for run in summary["runs"]:
    print(f"  N={run['n_paths']:>6}  exact argmax {run['argmax']:.3f}   "
          f"best of 100 candidates {run['curve_argmax']:.3f}   -> {out}/{run['file']}")

# one seed says little; the median over seeds shows the trend
tree = float(demo_tree_boundary()[DEMO_STEP])
print("\nmedian |argmax - tree| over 10 seeds:")
for n in (100, 1_000, 10_000, 100_000):
    d = [abs(sweep_point(n, s).argmax - tree) for s in range(10)]
    print(f"  N={n:>6}  {np.median(d):.3f}")
