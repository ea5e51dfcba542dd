"""
Recovering after a concept switch
=================================

CD1 runs concept A, then B, then A again. We track each model's error in
the stretch of rounds right after each switch.
"""

import sys

from hedgebp.harness import SegmentWindow, run_prequential
from hedgebp.network import NetConfig, init_network
from hedgebp.numeric import make_rng
from hedgebp.streams import cd1
from hedgebp.trainers import HedgeBackprop, OnlineBackprop

segment = int(sys.argv[1]) if len(sys.argv) > 1 else 10_000
stream = cd1(seed=0, segment_length=segment)

after_first = SegmentWindow(1 / 3, 1 / 3 + 0.1)
after_second = SegmentWindow(2 / 3, 2 / 3 + 0.1)

models = {
    "OGD depth 2": OnlineBackprop(init_network(NetConfig.fixed_depth(50, 2, 32, 2), make_rng(0, 99))),
    "OGD depth 16": OnlineBackprop(init_network(NetConfig.fixed_depth(50, 16, 32, 2), make_rng(0, 99))),
    "HBP depth 16": HedgeBackprop(init_network(NetConfig.hedged(50, 16, 32, 2), make_rng(0, 99))),
}
for name, trainer in models.items():
    r = run_prequential(trainer, stream, (after_first, after_second))
    print(f"{name:13s} final {r.final_cumulative_error:.4f}  after A->B {r.window_errors[after_first]:.4f}"
          f"  after B->A {r.window_errors[after_second]:.4f}")
