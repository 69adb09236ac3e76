"""
Mixing matrices and spectral gaps
=================================

Gossip over a graph mixes at a rate set by the spectral gap of W.
Sparse graphs mix slowly, dense ones quickly.
"""

import numpy as np

from motef import build_topology

n = 40
nets = {
    "ring": build_topology("ring", n),
    "star": build_topology("star", n),
    "grid 5x8": build_topology("grid", n, {"rows": 5, "cols": 8}),
    "ER p=0.2": build_topology("erdos_renyi", n, {"p": 0.2}, seed=0),
    "ER p=0.5": build_topology("erdos_renyi", n, {"p": 0.5}, seed=0),
}

for name, topo in nets.items():
    print(f"{name:10s} rho={topo.rho:.4f}  max degree={topo.degrees.max()}")

# rows and columns of a Metropolis matrix both sum to one
W = nets["ring"].W
print("row sums", np.unique(W.sum(axis=1).round(12)))

# repeated gossip drives a random vector to its mean, at speed ~ (1 - rho)^t
x = np.random.default_rng(0).standard_normal(n)
for name in ("ring", "ER p=0.5"):
    y = x.copy()
    for _ in range(50):
        y = nets[name].W @ y
    print(f"{name:10s} spread after 50 rounds: {np.ptp(y):.2e}")
