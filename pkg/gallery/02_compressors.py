"""
Contractive compressors
=======================

Each compressor returns a cheaper message C(x) with
E||C(x) - x||^2 <= (1 - alpha)||x||^2. We measure the ratio and the bit cost.
"""

import numpy as np

from motef import alpha_of, compress, message_bits, parse_compressor, verify_contractive

d = 20
x = np.random.default_rng(1).standard_normal(d)
rng = np.random.default_rng(2)

for text in ("topk:2", "randk:2", "gsgd:5", "gsgd:3", "identity"):
    spec = parse_compressor(text, d)
    y = compress(spec, x, rng).payload
    ratio = np.sum((y - x) ** 2) / np.sum(x**2)
    print(f"{text:9s} alpha={alpha_of(spec):.3f} bits={message_bits(spec):4d} one-shot ratio={ratio:.3f}")

# Monte Carlo over many inputs
rep = verify_contractive(parse_compressor("randk:2", d), 2000, rng, inner=20)
print(f"rand_k mean ratio {rep.mean_ratio:.4f} +- {rep.stderr:.4f}, bound {rep.bound:.4f}")

# coarse quantization in high dimension no longer contracts per sample
rep = verify_contractive(parse_compressor("gsgd:2", 400), 200, rng)
print(f"gsgd:2 at d=400 max ratio {rep.max_ratio:.3f} vs bound {rep.bound:.3f}, holds={rep.holds}")
