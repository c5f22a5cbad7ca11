"""
How many repulsions does a point need?
======================================

In the normalized setting both forces on a point are divided by the global
sum Z, so swapping the O(n) exact repulsion for one sampled repulsion (with
Z estimated from the same samples) leaves the attraction/repulsion ratio
unchanged in expectation. In the unnormalized setting no such division
happens and the attraction of a distant pair is exponentially small.

This script reruns the Monte-Carlo for a few sizes, then traces the angle
between exact and sampled repulsion along a normalized run.
"""

import numpy as np

from gdr.cli import angle_during_run
from gdr.metrics import force_ratio_experiment

print(f"{'n':>6} {'full':>10} {'sampled':>10} {'full/samp':>10} {'unnorm':>10} {'c p n':>6}")
for n in (100, 1000, 5000):
    r = force_ratio_experiment(n, seed=0, draws=100_000)
    print(f"{n:6d} {r.ratio_full:10.4f} {r.ratio_sampled:10.4f} {r.equality:10.4f} "
          f"{r.ratio_unnorm:10.2e} {r.closed_form_algebra:6.2f}")

# with p = 1 / (c n) both normalized ratios sit at c p n = 1 for every n,
# while the unnormalized one collapses as n grows

mean, trace, samples = angle_during_run(500, seed=0)
print(f"\nangle between exact and sampled repulsion, {samples} negatives per estimate")
for k, a in enumerate(trace):
    epoch = 50 * (k + 1)
    print(f"  epoch {epoch:4d}: {a:.2f} rad " + "#" * int(round(20 * a / np.pi)))
print(f"  mean {mean:.3f} rad")

# the angle is small while the cloud is compact and grows as the embedding
# spreads out: the exact normalized repulsion is then dominated by the few
# nearest embedding neighbours, which a handful of uniform samples rarely hits
