"""Fused forward/backward/update kernels for the training loops.

These compute exactly what ``trainers.hedged_gradients`` and
``OnlineBackprop.gradients`` compute, followed by the gradient step, without
per-layer numpy dispatch. Weight lists are ``numba.typed.List`` objects whose
entries alias the network's own arrays, so updates land in place.
"""

import numpy as np
from numba import njit

RELU = 0
TANH = 1


@njit(cache=True)
def _affine_act(W, h_aug, out, act):
    """Returns False if any pre-activation is non-finite."""
    n, m = W.shape
    ok = True
    for i in range(n):
        acc = 0.0
        for j in range(m):
            acc += W[i, j] * h_aug[j]
        if not np.isfinite(acc):
            ok = False
        if act == RELU:
            out[i] = acc if acc > 0.0 else 0.0
        else:
            out[i] = np.tanh(acc)
    out[n] = 1.0
    return ok


@njit(cache=True)
def _forward(Ws, x, act, bad):
    hs = []
    h = np.empty(x.shape[0] + 1)
    h[:-1] = x
    h[-1] = 1.0
    hs.append(h)
    for l in range(len(Ws)):
        W = Ws[l]
        nxt = np.empty(W.shape[0] + 1)
        if not _affine_act(W, h, nxt, act) and bad[0] == 0:
            bad[0] = l + 1
        hs.append(nxt)
        h = nxt
    return hs


@njit(cache=True)
def _softmax_head(T, h_aug, out):
    C, m = T.shape
    for c in range(C):
        acc = 0.0
        for j in range(m):
            acc += T[c, j] * h_aug[j]
        out[c] = acc
    mx = out.max()
    s = 0.0
    for c in range(C):
        out[c] = np.exp(out[c] - mx)
        s += out[c]
    for c in range(C):
        out[c] /= s


@njit(cache=True)
def _act_grad(h, i, act):
    if act == RELU:
        return 1.0 if h[i] > 0.0 else 0.0
    return 1.0 - h[i] * h[i]


@njit(cache=True)
def _backsweep(Ws, dh, dz, l, hs, act, eta, bad):
    """Turn dL/dh_l into dL/dz_l, push it to dL/dh_{l-1}, then update W_l."""
    W = Ws[l - 1]
    n, m = W.shape
    h = hs[l]
    for i in range(n):
        dz[i] = dh[i] * _act_grad(h, i, act)
        if not np.isfinite(dz[i]) and bad[0] == 0:
            bad[0] = l
    prev = hs[l - 1]
    new_dh = np.zeros(m - 1)
    for i in range(n):
        d = dz[i]
        if d != 0.0:
            for j in range(m - 1):
                new_dh[j] += W[i, j] * d
    for i in range(n):
        g = dz[i]
        for j in range(m):
            W[i, j] -= eta * (g * prev[j])
    return new_dh


@njit(cache=True)
def hedged_step(Ws, Ts, heads, alphas, x, y, eta, act, bad):
    """One HBP gradient step on every classifier and hidden layer.

    Returns the pre-update classifier distributions, one row per classifier.
    ``bad`` receives the first hidden layer (1-based) and classifier (0-based)
    whose gradient went non-finite; entries stay 0 and -1 otherwise.
    """
    hs = _forward(Ws, x, act, bad)
    K = len(Ts)
    C = Ts[0].shape[0]
    F = np.empty((K, C))
    for k in range(K):
        _softmax_head(Ts[k], hs[heads[k]], F[k])
    L = len(Ws)
    k = K - 1
    dh = np.zeros(hs[L].shape[0] - 1)
    active = False
    for l in range(L, -1, -1):
        h = hs[l]
        while k >= 0 and heads[k] == l:
            T = Ts[k]
            m = T.shape[1]
            err = alphas[k] * F[k]
            err[y] -= alphas[k]
            for c in range(C):
                if not np.isfinite(err[c]) and bad[1] < 0:
                    bad[1] = k
            for c in range(C):
                e = err[c]
                for j in range(m - 1):
                    dh[j] += T[c, j] * e
            for c in range(C):
                e = err[c]
                for j in range(m):
                    T[c, j] -= eta * (e * h[j])
            active = True
            k -= 1
        if l == 0:
            break
        if not active:
            dh = np.zeros(hs[l - 1].shape[0] - 1)
            continue
        dz = np.empty(Ws[l - 1].shape[0])
        dh = _backsweep(Ws, dh, dz, l, hs, act, eta, bad)
    return F


@njit(cache=True)
def _momentum_update(P, G, V, eta, mu, nesterov):
    n, m = P.shape
    for i in range(n):
        for j in range(m):
            v = mu * V[i, j] - eta * G[i, j]
            V[i, j] = v
            if nesterov:
                P[i, j] += mu * v - eta * G[i, j]
            else:
                P[i, j] += v


@njit(cache=True)
def backprop_step(Ws, T, Vs, VT, x, y, eta, mu, nesterov, act, bad):
    """One online-backprop step on a single-output network.

    With ``mu == 0`` the step is plain gradient descent and ``Vs``/``VT`` are
    ignored. Returns the pre-update output distribution; ``bad`` is filled as
    in ``hedged_step``.
    """
    hs = _forward(Ws, x, act, bad)
    L = len(Ws)
    C, m = T.shape
    f = np.empty(C)
    _softmax_head(T, hs[L], f)
    err = f.copy()
    err[y] -= 1.0
    for c in range(C):
        if not np.isfinite(err[c]):
            bad[1] = 0
    dh = np.zeros(m - 1)
    for c in range(C):
        for j in range(m - 1):
            dh[j] += T[c, j] * err[c]
    G = np.empty((C, m))
    h = hs[L]
    for c in range(C):
        for j in range(m):
            G[c, j] = err[c] * h[j]
    if mu == 0.0:
        for c in range(C):
            for j in range(m):
                T[c, j] -= eta * G[c, j]
    else:
        _momentum_update(T, G, VT, eta, mu, nesterov)
    for l in range(L, 0, -1):
        W = Ws[l - 1]
        n, mw = W.shape
        h = hs[l]
        dz = np.empty(n)
        for i in range(n):
            dz[i] = dh[i] * _act_grad(h, i, act)
            if not np.isfinite(dz[i]) and bad[0] == 0:
                bad[0] = l
        new_dh = np.zeros(mw - 1)
        for i in range(n):
            for j in range(mw - 1):
                new_dh[j] += W[i, j] * dz[i]
        prev = hs[l - 1]
        GW = np.empty((n, mw))
        for i in range(n):
            for j in range(mw):
                GW[i, j] = dz[i] * prev[j]
        if mu == 0.0:
            for i in range(n):
                for j in range(mw):
                    W[i, j] -= eta * GW[i, j]
        else:
            _momentum_update(W, GW, Vs[l - 1], eta, mu, nesterov)
        dh = new_dh
    return f
