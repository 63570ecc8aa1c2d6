"""How wide is the uncertainty on the exponent, and can we trust it?

Intervals come from refitting on 80% subsamples drawn without replacement
and taking the 10th and 90th percentiles. A small repeated experiment checks
how often the interval contains the true exponent.
"""

import numpy as np

from scalex import frontier, synth

truth = synth.REFERENCE_PARAMS
true_a = truth.beta / (truth.alpha + truth.beta)
budgets = np.geomspace(6e18, 3e21, 9)

data = synth.gen_isoflop_suite(truth, budgets, rng_seed=0, log_noise_sigma=0.01)
summary = frontier.bootstrap(data, "isoflop", n_resamples=100, fraction=0.8, seed=42)
for name, s in summary.items():
    print(f"{name}: {s.point:.4f}  [{s.p10:.4f}, {s.p90:.4f}]  failed resamples: {s.n_failed}")

hits = 0
reps = 30
for rep in range(reps):
    d = synth.gen_isoflop_suite(truth, budgets, rng_seed=1000 + rep, log_noise_sigma=0.01)
    s = frontier.bootstrap(d, "isoflop", seed=rep)["a"]
    hits += s.p10 <= true_a <= s.p90
print(f"\nintervals containing the true a = {true_a:.4f}: {hits}/{reps}")

# Subsampling 80% without replacement spreads the refits less than fresh
# data would, so a nominal 80% interval tends to cover less than 80% of the
# time on small designs like this one.
