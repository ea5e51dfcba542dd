"""
Shallow nets learn fast, deep nets learn more
==============================================

Train fixed-depth online nets on one synthetic stream and compare their
error early in the stream with their error much later.
"""

import sys

from hedgebp.harness import EARLY, FIRST_HALF_PERCENT, FULL, LATE, run_prequential
from hedgebp.network import NetConfig, init_network
from hedgebp.numeric import make_rng
from hedgebp.streams import syn8
from hedgebp.trainers import OnlineBackprop

length = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000

# a 50-feature binary stream labelled by a random 8-layer tanh network
stream = syn8(seed=0, length=length)

windows = (FULL, FIRST_HALF_PERCENT, EARLY, LATE)
print("depth " + " ".join(f"{w.label:>9}" for w in windows))
for depth in (2, 4, 8, 16):
    net = init_network(NetConfig.fixed_depth(50, depth, 32, 2), make_rng(0, 99))
    result = run_prequential(OnlineBackprop(net), stream, windows)
    print(f"{depth:5d} " + " ".join(f"{result.window_errors[w]:9.4f}" for w in windows))
