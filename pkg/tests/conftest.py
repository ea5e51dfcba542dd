import numpy as np
import pytest

from hedgebp.network import NetConfig, init_network
from hedgebp.numeric import make_rng


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_net(seed, d=5, widths=(8, 8, 8, 8), C=3, attach_input=False, heads=None, randomize_alpha=True):
    r = make_rng(seed)
    cfg = NetConfig(d, widths, C, attach_input_classifier=attach_input, heads=heads)
    net = init_network(cfg, r)
    # non-zero biases so the bias column is exercised
    for W in net.parameters():
        W[:, -1] = r.normal(0, 0.3, W.shape[0])
    if randomize_alpha:
        a = r.random(cfg.num_classifiers) + 0.1
        net.alphas = a / a.sum()
    return net, r


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
