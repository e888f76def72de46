"""Run Layer Token Attention forward and compare its analytic gradient with finite differences."""

import numpy as np

from layerparse.lta import LtaParams, attention_probs, lta_forward, lta_grad_check

rng = np.random.default_rng(0)
tokens = rng.standard_normal((3, 5, 16))  # condition, background, sticker at 5 positions
params = LtaParams.init(16, 4, rng)

out = lta_forward(tokens, params)
print("max |update| with near-closed gates:", float(np.abs(out - tokens).max()))
print("branch attention at position 0, head 0:\n", attention_probs(tokens, params)[0, 0].round(3))

for n, d, h in [(4, 8, 2), (16, 32, 4)]:
    errs = lta_grad_check(n, d, h, seed=0)
    print(f"N={n} d={d} h={h}: max relative error {max(errs.values()):.2e}")
