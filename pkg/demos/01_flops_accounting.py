"""How far is the 6ND rule from an itemised FLOPs count?

The rule of thumb C = 6ND ignores attention's quadratic terms and the
embedding/logit matrices. Here we itemise one forward pass, then compare
the per-token training cost with 6N for the bundled reference models under
both embedding policies.
"""

from scalex import flops
from scalex.data_model import ModelShape

shape = ModelShape(n_layers=40, d_model=3584, ffw_size=14336, key_size=128, n_heads=28)
br = flops.forward_flops(shape)
print("forward pass of one 2048-token sequence, 6.8B-parameter shape")
for name, value in br.rows():
    print(f"  {name:<24} {value:12.4e}")

print("\nratio of itemised training FLOPs to 6ND")
print(f"  {'model':>8} {'include emb':>12} {'exclude emb':>12} {'reference':>10}")
for n, shape, reference in flops.reference_flop_ratios():
    inc = flops.flop_ratio(shape, n, flops.INCLUDE_EMBEDDINGS)
    exc = flops.flop_ratio(shape, n, flops.EXCLUDE_EMBEDDINGS)
    print(f"  {n / 1e6:7.0f}M {inc:12.3f} {exc:12.3f} {reference:10.2f}")

# Dropping the embedding and logit terms matches the reference ratios; keeping
# them inflates small models, where the vocabulary matrix dominates.
n_tied = flops.count_params(shape)
print(f"\nparameters of the 6.8B shape by the dense formula: {n_tied / 1e9:.3f}B")
