"""
Letting the stream pick the depth
=================================

A single hedged net carries a classifier on every hidden layer. Each round
the classifiers vote with weights alpha, all of them are trained by one
backward sweep, and the weights shrink for classifiers that did badly.
"""

import sys

import numpy as np

from hedgebp.harness import FIRST_HALF_PERCENT, FULL, SegmentWindow, run_prequential
from hedgebp.network import NetConfig, init_network, load_checkpoint, save_checkpoint
from hedgebp.numeric import make_rng
from hedgebp.streams import syn8
from hedgebp.trainers import HbpHyperParams, HedgeBackprop

length = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
stream = syn8(seed=0, length=length)

# classifiers sit after hidden layers 1..15, i.e. depths 2..16
config = NetConfig.hedged(50, 16, 32, 2)
net = init_network(config, make_rng(0, 99))
trainer = HedgeBackprop(net, HbpHyperParams(eta=0.01, beta=0.99, s=0.2))

last = SegmentWindow(0.8, 1.0)
result = run_prequential(trainer, stream, (FULL, FIRST_HALF_PERCENT, last), alpha_log_stride=500)
print(f"cumulative error: {result.final_cumulative_error:.4f}")
print(f"expected depth, first 0.5%: {result.mean_expected_depth(FIRST_HALF_PERCENT):.2f}")
print(f"expected depth, last 20%:   {result.mean_expected_depth(last):.2f}")

# where the weight ended up
final = result.alpha_trajectory[-1]
for depth, a in zip(config.head_depths, final):
    print(f"  depth {depth:2d} {a:.3f} " + "#" * int(round(a * 100)))

# the whole model, weights and alphas included, fits in one .npz
save_checkpoint(trainer.net, "hedged_demo.npz")
restored = load_checkpoint("hedged_demo.npz")
assert restored.equals(trainer.net)
assert np.isclose(restored.alphas.sum(), 1.0)
