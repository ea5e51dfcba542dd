"""Online learners: Hedge Backpropagation and fixed-depth online backprop.

Both consume one labelled instance per round, predict with the current
weights, then update. The prediction in the returned ``StepRecord`` always
comes from the forward pass made before the update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from numba import typed, types

from . import _kernels
from .network import ACTIVATIONS, ForwardCache, HedgedNetwork, forward, predict_from
from .numeric import PROB_FLOOR, as_vector

BACKENDS = ("numba", "numpy")
_ACT_CODES = {"relu": _kernels.RELU, "tanh": _kernels.TANH}

DEFAULT_ETA = 0.01
DEFAULT_MOMENTUM_ETA = 0.001
DEFAULT_BETA = 0.99
DEFAULT_SMOOTHING = 0.2


@dataclass(frozen=True)
class HbpHyperParams:
    eta: float = DEFAULT_ETA
    beta: float = DEFAULT_BETA
    s: float = DEFAULT_SMOOTHING
    hedge_loss_clip: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "hedge_loss_clip", tuple(float(c) for c in self.hedge_loss_clip))
        problems = self.problems()
        if problems:
            raise ValueError("invalid HbpHyperParams: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not self.eta >= 0:
            out.append(f"eta must be >= 0, got {self.eta}")
        if not 0 < self.beta < 1:
            out.append(f"beta must lie in (0, 1), got {self.beta}")
        if not 0 < self.s < 1:
            out.append(f"s must lie in (0, 1), got {self.s}")
        if len(self.hedge_loss_clip) != 2 or not self.hedge_loss_clip[0] < self.hedge_loss_clip[1]:
            out.append(f"hedge_loss_clip must be [lo, hi] with lo < hi, got {list(self.hedge_loss_clip)}")
        return out


@dataclass(frozen=True)
class BaselineHyperParams:
    eta: float = DEFAULT_ETA
    momentum: float = 0.0
    nesterov: bool = False

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("invalid BaselineHyperParams: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not self.eta > 0:
            out.append(f"eta must be > 0, got {self.eta}")
        if not 0 <= self.momentum < 1:
            out.append(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.nesterov and self.momentum == 0:
            out.append("nesterov requires momentum > 0")
        return out


@dataclass(frozen=True)
class StepRecord:
    round: int
    predicted: int
    label: int
    correct: bool
    combined_loss: float
    per_classifier_loss: np.ndarray = field(repr=False)
    alpha_snapshot: np.ndarray = field(repr=False)
    cumulative_error: float


def _classifier_losses(f: np.ndarray, y: int) -> np.ndarray:
    return -np.log(np.maximum(f[:, y], PROB_FLOOR))


def _check_finite(arr, what: str):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")


def hedged_gradients(
    net: HedgedNetwork, cache: ForwardCache, y: int, alphas: np.ndarray | None = None
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradients of the hedged loss ``sum_l alpha_l * CE(f_l, y)``.

    Returns ``(classifier_grads, hidden_grads)`` in the network's order. One
    reverse sweep covers every classifier: walking from the deepest layer to
    the input, each classifier injects its alpha-weighted output error into
    the running derivative of the layer it reads, so hidden layer ``l``
    collects contributions from exactly the classifiers at depth ``>= l``.
    """
    cfg = net.config
    if alphas is None:
        alphas = net.alphas
    act_grad = ACTIVATIONS[cfg.activation][1]
    heads = cfg.head_layers
    errors = alphas[:, None] * cache.f
    for k in range(len(heads)):
        errors[k, y] -= alphas[k]

    theta_grads: list[np.ndarray] = [None] * len(heads)
    hidden_grads: list[np.ndarray] = [None] * cfg.num_hidden
    k = len(heads) - 1
    dh = None
    for l in range(cfg.num_hidden, -1, -1):
        h = cache.h_aug[l]
        while k >= 0 and heads[k] == l:
            err = errors[k]
            T = net.classifier_weights[k]
            theta_grads[k] = err[:, None] * h[None, :]
            back = T[:, :-1].T @ err
            dh = back if dh is None else dh + back
            k -= 1
        if l == 0:
            break
        if dh is None:
            # no classifier at or above this layer
            W = net.hidden_weights[l - 1]
            hidden_grads[l - 1] = np.zeros_like(W)
            continue
        dz = dh * act_grad(h[:-1])
        W = net.hidden_weights[l - 1]
        hidden_grads[l - 1] = dz[:, None] * cache.h_aug[l - 1][None, :]
        dh = W[:, :-1].T @ dz
    return theta_grads, hidden_grads


def hbp_theta_gradient(cache: ForwardCache, net: HedgedNetwork, y: int, l: int) -> np.ndarray:
    """Gradient for classifier ``l``: ``alpha_l * (f_l - onehot(y)) h_aug^T``."""
    err = net.alphas[l] * cache.f[l].copy()
    err[y] -= net.alphas[l]
    h = cache.h_aug[net.config.head_layers[l]]
    return err[:, None] * h[None, :]


def hbp_hidden_gradient(cache: ForwardCache, net: HedgedNetwork, y: int, l: int) -> np.ndarray:
    """Gradient for hidden layer ``l`` (1-based) summed over the classifiers at or above it."""
    if not 1 <= l <= net.config.num_hidden:
        raise IndexError(f"hidden layer {l} out of range 1..{net.config.num_hidden}")
    return hedged_gradients(net, cache, y)[1][l - 1]


def hedge_update(alphas, losses, beta: float, s: float) -> np.ndarray:
    """Discount each weight by ``beta ** loss``, floor at ``s / K``, renormalise.

    ``K`` is the number of classifiers. Losses must already be clipped to the
    range the exponent expects.
    """
    alphas = as_vector(alphas, "alphas")
    losses = as_vector(losses, "losses")
    out = alphas * np.power(beta, losses)
    np.maximum(out, s / len(out), out=out)
    return out / out.sum()


class _Learner:
    def __init__(self, net: HedgedNetwork, backend: str):
        if backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {backend!r}")
        self.net = net
        self.backend = backend
        self.rounds = 0
        self.mistakes = 0
        self._act = _ACT_CODES[net.config.activation]
        self._bad = np.array([0, -1], dtype=np.int64)
        if backend == "numba":
            # aliases of the network's arrays; the trainer must own ``net``
            self._Ws = typed.List(net.hidden_weights) if net.hidden_weights else typed.List.empty_list(_MATRIX)
            self._Ts = typed.List(net.classifier_weights)

    @property
    def cumulative_error(self) -> float:
        return self.mistakes / self.rounds if self.rounds else 0.0

    def _check_input(self, x, y):
        cfg = self.net.config
        if not 0 <= y < cfg.num_classes:
            raise IndexError(f"label {y} out of range for {cfg.num_classes} classes")
        x = as_vector(x, "x")
        if x.shape[0] != cfg.input_dim:
            raise ValueError(f"input has {x.shape[0]} features, network expects {cfg.input_dim}")
        return x

    def _raise_bad(self):
        hidden, head = self._bad
        self._bad[:] = (0, -1)
        if head >= 0:
            raise FloatingPointError(f"non-finite gradient at classifier {head}")
        raise FloatingPointError(f"non-finite gradient at hidden layer {hidden}")

    def _record(self, combined, y, losses, combined_loss) -> StepRecord:
        predicted = predict_from(combined)
        correct = predicted == y
        self.rounds += 1
        self.mistakes += not correct
        return StepRecord(
            round=self.rounds,
            predicted=predicted,
            label=y,
            correct=correct,
            combined_loss=combined_loss,
            per_classifier_loss=losses,
            alpha_snapshot=self.net.alphas.copy(),
            cumulative_error=self.mistakes / self.rounds,
        )


_MATRIX = types.Array(types.float64, 2, "C")


class HedgeBackprop(_Learner):
    """Hedge Backpropagation over a network with several classifiers.

    Each round: predict with the alpha-weighted mixture, take per-classifier
    cross-entropy losses, apply one gradient step to every classifier and
    hidden layer (weighted by the alphas in force at the start of the round),
    then hedge-update the alphas with the losses clipped to
    ``hp.hedge_loss_clip``.
    """

    def __init__(self, net: HedgedNetwork, hp: HbpHyperParams | None = None, backend: str = "numba"):
        super().__init__(net, backend)
        self.hp = hp or HbpHyperParams()
        self._heads = np.array(net.config.head_layers, dtype=np.int64)

    def step(self, x, y: int) -> StepRecord:
        net, hp = self.net, self.hp
        y = int(y)
        x = self._check_input(x, y)
        alphas = net.alphas
        if self.backend == "numba":
            f = _kernels.hedged_step(self._Ws, self._Ts, self._heads, alphas, x, y, hp.eta, self._act, self._bad)
            if self._bad[0] or self._bad[1] >= 0:
                self._raise_bad()
        else:
            cache = forward(net, x)
            f = cache.f
            theta_grads, hidden_grads = hedged_gradients(net, cache, y)
            for k, (T, g) in enumerate(zip(net.classifier_weights, theta_grads)):
                _check_finite(g, f"gradient of classifier {k}")
                T -= hp.eta * g
            for l, (W, g) in enumerate(zip(net.hidden_weights, hidden_grads), start=1):
                _check_finite(g, f"gradient of hidden layer {l}")
                W -= hp.eta * g
        losses = _classifier_losses(f, y)
        _check_finite(losses, "classifier losses")
        combined = alphas @ f
        combined_loss = float(alphas @ losses)
        lo, hi = hp.hedge_loss_clip
        net.alphas = hedge_update(alphas, np.clip(losses, lo, hi), hp.beta, hp.s)
        return self._record(combined, y, losses, combined_loss)


def hbp_step(trainer: HedgeBackprop, x, y: int) -> StepRecord:
    return trainer.step(x, y)


class OnlineBackprop(_Learner):
    """Single-output online backprop with optional (Nesterov) momentum.

    Velocity follows ``v <- mu * v - eta * g``; plain momentum applies ``v``,
    Nesterov applies the look-ahead ``mu * v - eta * g``. A network with no
    hidden layers is the linear online-gradient-descent baseline.
    """

    def __init__(self, net: HedgedNetwork, hp: BaselineHyperParams | None = None, backend: str = "numba"):
        if net.num_classifiers != 1:
            raise ValueError(f"online backprop needs a single-output network, got {net.num_classifiers} classifiers")
        super().__init__(net, backend)
        self.hp = hp or BaselineHyperParams()
        self.velocity = [np.zeros_like(p) for p in net.parameters()]
        if backend == "numba":
            self._Vs = typed.List(self.velocity[:-1]) if net.hidden_weights else typed.List.empty_list(_MATRIX)

    def gradients(self, cache: ForwardCache, y: int) -> list[np.ndarray]:
        """Backprop gradients in ``net.parameters()`` order (hidden layers, then output)."""
        net = self.net
        act_grad = ACTIVATIONS[net.config.activation][1]
        err = cache.f[0].copy()
        err[y] -= 1.0
        L = net.config.num_hidden
        T = net.classifier_weights[0]
        grads = [None] * (L + 1)
        grads[L] = err[:, None] * cache.h_aug[L][None, :]
        dh = T[:, :-1].T @ err
        for l in range(L, 0, -1):
            dz = dh * act_grad(cache.h_aug[l][:-1])
            grads[l - 1] = dz[:, None] * cache.h_aug[l - 1][None, :]
            if l > 1:
                dh = net.hidden_weights[l - 1][:, :-1].T @ dz
        return grads

    def _apply(self, params, grads):
        hp = self.hp
        L = self.net.config.num_hidden
        for i, (p, g) in enumerate(zip(params, grads)):
            _check_finite(g, "gradient of output layer" if i == L else f"gradient of hidden layer {i + 1}")
            if not hp.momentum:
                p -= hp.eta * g
                continue
            v = self.velocity[i]
            v *= hp.momentum
            v -= hp.eta * g
            if hp.nesterov:
                p += hp.momentum * v - hp.eta * g
            else:
                p += v

    def step(self, x, y: int) -> StepRecord:
        net, hp = self.net, self.hp
        y = int(y)
        x = self._check_input(x, y)
        if self.backend == "numba":
            out = _kernels.backprop_step(
                self._Ws, net.classifier_weights[0], self._Vs, self.velocity[-1],
                x, y, hp.eta, hp.momentum, hp.nesterov, self._act, self._bad,
            )
            if self._bad[0] or self._bad[1] >= 0:
                self._raise_bad()
            f = out[None, :]
        else:
            cache = forward(net, x)
            f = cache.f
            self._apply(net.parameters(), self.gradients(cache, y))
        losses = _classifier_losses(f, y)
        _check_finite(losses, "output loss")
        return self._record(f[0], y, losses, float(losses[0]))


def ogd_step(trainer: OnlineBackprop, x, y: int) -> StepRecord:
    return trainer.step(x, y)


@dataclass(frozen=True)
class RegretAudit:
    hedge_loss: float
    best_expert_loss: float
    regret: float
    bound: float
    beta_bound: float
    """Freund-Schapire guarantee on the regret at the beta actually used."""


def tuned_beta(T: int, N: int) -> float:
    """Freund-Schapire tuning ``1 / (1 + sqrt(2 ln N / T))``."""
    return 1.0 / (1.0 + math.sqrt(2.0 * math.log(N) / T))


def hedge_regret_audit(loss_matrix, beta: float) -> RegretAudit:
    """Run plain hedge (no floor) on a ``T x N`` loss matrix with entries in [0, 1].

    The hedge loss is the expected loss of the weighted mixture. ``bound`` is
    ``sqrt(T ln N)``; ``beta_bound`` is ``(ln N + (ln(1/beta) - (1 - beta)) L*) / (1 - beta)``
    for the best expert's loss ``L*``.
    """
    losses = np.asarray(loss_matrix, dtype=np.float64)
    if losses.ndim != 2 or losses.shape[1] < 1:
        raise ValueError(f"loss matrix must be T x N, got shape {losses.shape}")
    if losses.size and (losses.min() < 0 or losses.max() > 1):
        raise ValueError("losses must lie in [0, 1]")
    T, N = losses.shape
    log_beta = math.log(beta)
    log_w = np.zeros(N)
    total = 0.0
    for row in losses:
        p = np.exp(log_w - log_w.max())
        total += float(p @ row) / p.sum()
        log_w += log_beta * row
    best = float(losses.sum(axis=0).min())
    beta_bound = (math.log(N) + (-log_beta - (1 - beta)) * best) / (1 - beta)
    return RegretAudit(total, best, total - best, math.sqrt(T * math.log(N)), beta_bound)
