"""Independent reference computations used by the tests."""

import numpy as np

from hedgebp.network import forward


def hedged_loss(net, x, y):
    f = forward(net, x).f
    return float(net.alphas @ -np.log(f[:, y]))


def finite_difference_grads(net, x, y, step=1e-6):
    """Central differences of the hedged loss for every parameter matrix."""
    grads = []
    for P in net.parameters():
        G = np.zeros_like(P)
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + step
            up = hedged_loss(net, x, y)
            P[idx] = old - step
            down = hedged_loss(net, x, y)
            P[idx] = old
            G[idx] = (up - down) / (2 * step)
        grads.append(G)
    return grads


def min_abs_preactivation(net, x):
    h = forward(net, x).h_aug
    return min(float(np.abs(W @ a).min()) for W, a in zip(net.hidden_weights, h[:-1])) if net.hidden_weights else np.inf


def per_classifier_backprop(net, x, y):
    """Sum over classifiers of alpha_j times plain backprop through a truncated
    copy of the network that ends at classifier j."""
    cfg = net.config
    hidden = [np.zeros_like(W) for W in net.hidden_weights]
    heads = []
    for k, layer in enumerate(cfg.head_layers):
        h = [np.append(np.asarray(x, float), 1.0)]
        for W in net.hidden_weights[:layer]:
            h.append(np.append(np.maximum(W @ h[-1], 0.0), 1.0))
        T = net.classifier_weights[k]
        z = T @ h[layer]
        p = np.exp(z - z.max())
        p /= p.sum()
        err = p.copy()
        err[y] -= 1.0
        err *= net.alphas[k]
        heads.append(np.outer(err, h[layer]))
        dh = T[:, :-1].T @ err
        for l in range(layer, 0, -1):
            dz = dh * (h[l][:-1] > 0)
            hidden[l - 1] += np.outer(dz, h[l - 1])
            dh = net.hidden_weights[l - 1][:, :-1].T @ dz
    return hidden + heads


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-8))
