"""Walk through the bimodal Laplacian mixture: density, mode, entropy."""

import numpy as np

from smdnet import mixture as mx
from smdnet.mixture import MixtureParams

# A pixel right on a depth edge: 70% belief in a far surface at 0.3,
# 30% in a near one at 0.8.  Both are sharp.
edge = MixtureParams(pi=0.7, mu1=0.3, b1=0.1, mu2=0.8, b2=0.05)

d = np.linspace(0, 1, 11)
print("density along [0, 1]:")
for di, p in zip(d, mx.pdf(edge, d)):
    print(f"  d={di:.1f}  p={p:7.3f}")

# The point estimate is one of the two means, never something in between.
# A plain regression would land near the weighted average instead.
print("mode:", mx.select_mode(edge))
print("weighted mean (what L2 regression drifts to):", edge.pi * edge.mu1 + (1 - edge.pi) * edge.mu2)

# Entropy summarises how unsure the head is.  Collapsing both components on
# one location gives back the single-Laplace value 1 + log(2b).
single = MixtureParams(0.5, 0.4, 0.1, 0.4, 0.1)
print("collapsed entropy:", mx.entropy(single), "closed form:", 1 + np.log(0.2))

# Splitting the same mass over two far-apart peaks adds exactly log 2.
split = MixtureParams(0.5, 0.2, 0.01, 0.8, 0.01)
print("split entropy - single entropy:", mx.entropy(split) - (1 + np.log(0.02)), "log 2:", np.log(2))

# The training loss is the negative log-likelihood; its gradient is analytic.
print("nll at d=0.32:", mx.nll(edge, 0.32))
print("gradient (pi, mu1, b1, mu2, b2):", np.round(mx.nll_grad(edge, 0.32), 4))
