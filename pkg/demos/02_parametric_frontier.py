"""From five loss constants to a compute-optimal allocation.

With L(N, D) = E + A/N^alpha + B/D^beta and C = 6ND, the loss-minimising
size grows as C^a with a = beta / (alpha + beta). The closed form is checked
against a brute-force 1-D search and used to tabulate budgets.
"""

from scalex import approaches, frontier, synth
from scalex.data_model import Diagnostics, ParametricParams

params = synth.REFERENCE_PARAMS
cf = approaches.closed_form_frontier(params)
print(f"a = {cf.a:.4f}, b = {cf.b:.4f}, G = {cf.G:.4f}")

for c in (1e20, 1e22, frontier.REFERENCE_BUDGET):
    closed = cf.G * (c / 6) ** cf.a
    searched = synth.optimal_size(params, c)
    print(f"C={c:.2e}: N_opt closed form {closed:.4e}, golden-section {searched:.4e}")

fit = approaches.frontier_fit(params, Diagnostics(0, 0.0, 0.0))
pred = frontier.predict_opt(fit, frontier.REFERENCE_BUDGET)
print(f"\nat {frontier.REFERENCE_BUDGET:.2e} FLOPs: N={pred.n_opt / 1e9:.1f}B, D={pred.d_opt / 1e12:.2f}T, "
      f"predicted loss {pred.loss_hat:.3f}")

print("\nbudget table (C = 6ND by construction)")
for row in frontier.budget_table(fit, [4e8, 1e9, 1e10, 67e9, 175e9, 1e12]):
    print(f"  N={row.n_params:9.3g}  C={row.flops:9.3g}  ({row.reference_units:8.3g} x reference)  D={row.tokens:9.3g}")

# The constants are quoted to two or three digits, and the table is very
# sensitive to them: exponents inside their rounding intervals shift the
# 400M-parameter budget by more than half.
nudged = ParametricParams(E=1.69, A=406.35, B=410.75, alpha=0.33525, beta=0.2825)
row = frontier.budget_table(approaches.frontier_fit(nudged, Diagnostics(0, 0.0, 0.0)), [4e8])[0]
print(f"\nalpha=0.33525, beta=0.2825: N=4e8 needs C={row.flops:.3g}, D={row.tokens:.3g}")
