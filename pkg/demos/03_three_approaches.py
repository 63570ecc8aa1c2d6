"""Three estimators of the same frontier, run on data with a known answer.

Synthetic losses are drawn from a parametric ground truth. The envelope
approach works on whole training curves, the isoFLOP approach on final
losses at fixed budgets, and the parametric approach fits the loss surface
itself. All three should land near the true exponent.
"""

import numpy as np

from scalex import approaches, synth
from scalex.fitting import reduced_grid

truth = synth.REFERENCE_PARAMS
true_a = truth.beta / (truth.alpha + truth.beta)

runs = synth.gen_envelope_suite(truth, np.geomspace(1e7, 1e10, 15))
points = synth.gen_isoflop_suite(truth, np.geomspace(6e18, 3e21, 9), sizes_per_budget=7)

fit1 = approaches.approach1(runs)
fit2 = approaches.approach2(points)
fit3 = approaches.approach3(points, grid=reduced_grid())

print(f"true a = {true_a:.4f}")
for name, fit in (("envelope", fit1), ("isoFLOP", fit2), ("parametric", fit3)):
    print(f"  {name:<11} a={fit.a:.4f}  b={fit.b:.4f}  N_opt(1e21)={fit.n_coeff * 1e21**fit.a:.3e}")

# The envelope is the noisiest: the runs with the smallest and largest sizes
# win parts of the FLOPs range only because the sweep stops there, so those
# points are dropped by default.
kept = approaches.approach1(runs, drop_boundary_sizes=False)
print(f"\nenvelope keeping extreme sizes: a={kept.a:.4f}")
print(f"share of envelope points from the last 15% of a run: {fit1.diagnostics.late_winner_fraction:.2f}")
print(f"parametric fit recovered {fit3.params}")
