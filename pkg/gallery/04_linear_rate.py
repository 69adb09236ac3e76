"""
Linear convergence without noise
================================

With exact gradients the synthetic problem is strongly convex and the
suboptimality of the mean iterate falls geometrically to machine precision.
"""

import numpy as np

from motef import HyperParams, build_topology, parse_compressor, run, synth_new

prob = synth_new(8, 20, 10.0, 0.0, seed=0)
topo = build_topology("ring", 8)
recs = run(prob, topo, parse_compressor("topk:2", 20), HyperParams(0.1, 0.01, 0.5, iters=2000), eval_every=100)

for r in recs[::2]:
    print(f"t={r.t:5d}  subopt={r.subopt:.3e}  consensus={r.consensus:.3e}")

t = np.array([r.t for r in recs if 1e-10 < r.subopt < 1e-3])
s = np.array([r.subopt for r in recs if 1e-10 < r.subopt < 1e-3])
slope = np.polyfit(t, np.log(s), 1)[0]
print(f"contraction per round ~ {np.exp(slope):.5f}")
