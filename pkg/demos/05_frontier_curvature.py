"""Does the frontier bend? Fit power laws on thirds of the FLOPs range.

If log N_opt is linear in log C every slice gives the same exponent; a
frontier that bends down gives decreasing exponents from slice to slice.
"""

import numpy as np

from scalex import approaches, curves, frontier, synth
from scalex.data_model import FrontierPoint

c = np.geomspace(1e17, 1e23, 300)
for label, n in (("straight", 0.3 * c**0.5), ("bending", c ** (0.5 - 0.01 * np.log10(c)))):
    env = [FrontierPoint(float(x), float(y), float(x / (6 * y)), 2.0) for x, y in zip(c, n)]
    exps = [f.exponent for f in frontier.segmented_frontier_fit(env)]
    print(f"{label:<9} " + "  ".join(f"{e:.4f}" for e in exps))

# The same diagnostic on an envelope extracted from synthetic training runs.
runs = synth.gen_envelope_suite(synth.REFERENCE_PARAMS, np.geomspace(1e7, 1e10, 15))
env = curves.extract_envelope([curves.smooth_run(r) for r in runs])
sizes = sorted({r.n_params for r in runs})
env = [p for p in env if p.n_params not in (sizes[0], sizes[-1])]
print("synthetic " + "  ".join(f"{f.exponent:.4f}" for f in frontier.segmented_frontier_fit(env)))
for k in (1, 2, 3):
    print(f"  slice {k}/3 via approach1: a={approaches.approach1(runs, segment=(k, 3)).a:.4f}")
