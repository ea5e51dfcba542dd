"""Hedged deep network: a shared ReLU trunk with a softmax classifier on
selected hidden layers, combined through hedge weights.

Weight matrices carry their bias as the last column, and hidden
representations are stored augmented with a trailing constant 1, so every
affine map is one ``W @ h_aug`` product.

Depth convention: a classifier reading hidden layer ``l`` (``l = 0`` is the
raw input) sees ``l`` hidden weight layers plus its own, so its depth is
``l + 1``. A network with ``L`` hidden layers is an ``L + 1`` layer network.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numeric import as_vector, softmax

CHECKPOINT_FORMAT = "hedgebp-checkpoint"
CHECKPOINT_VERSION = 1

ACTIVATIONS = {
    # name -> (activation, derivative expressed through the activation output)
    "relu": (lambda z: np.maximum(z, 0.0), lambda h: (h > 0.0).astype(np.float64)),
    "tanh": (np.tanh, lambda h: 1.0 - h * h),
}

INIT_SCHEMES = ("he", "xavier", "zeros")


@dataclass(frozen=True)
class NetConfig:
    """Shape of a hedged network.

    ``heads`` lists the hidden-layer indices that carry a classifier. When left
    as ``None`` it is every hidden layer, plus the input when
    ``attach_input_classifier`` is set. ``heads=(L,)`` gives a plain
    fixed-depth network with a single output layer.
    """

    input_dim: int
    hidden_widths: tuple[int, ...]
    num_classes: int
    activation: str = "relu"
    attach_input_classifier: bool = False
    heads: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.heads is not None:
            object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        problems = self.problems()
        if problems:
            raise ValueError("invalid NetConfig: " + "; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.input_dim < 1:
            out.append(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            out.append(f"num_classes must be >= 2, got {self.num_classes}")
        if any(w < 1 for w in self.hidden_widths):
            out.append(f"hidden widths must be >= 1, got {list(self.hidden_widths)}")
        if self.activation not in ACTIVATIONS:
            out.append(f"activation must be one of {sorted(ACTIVATIONS)}, got {self.activation!r}")
        heads = self.head_layers
        if not heads:
            out.append("network needs at least one classifier")
        elif any(not 0 <= h <= self.num_hidden for h in heads) or list(heads) != sorted(set(heads)):
            out.append(f"heads must be strictly increasing indices in [0, {self.num_hidden}], got {list(heads)}")
        if self.num_hidden == 0 and heads != (0,):
            out.append("a network without hidden layers must classify from the input (heads=(0,))")
        return out

    @property
    def num_hidden(self) -> int:
        return len(self.hidden_widths)

    @property
    def head_layers(self) -> tuple[int, ...]:
        if self.heads is not None:
            return self.heads
        first = 0 if self.attach_input_classifier else 1
        return tuple(range(first, self.num_hidden + 1))

    @property
    def head_depths(self) -> tuple[int, ...]:
        return tuple(h + 1 for h in self.head_layers)

    @property
    def num_classifiers(self) -> int:
        return len(self.head_layers)

    @property
    def layer_widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "num_classes": self.num_classes,
            "activation": self.activation,
            "attach_input_classifier": self.attach_input_classifier,
            "heads": None if self.heads is None else list(self.heads),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        heads = d.get("heads")
        return cls(
            input_dim=int(d["input_dim"]),
            hidden_widths=tuple(d["hidden_widths"]),
            num_classes=int(d["num_classes"]),
            activation=d.get("activation", "relu"),
            attach_input_classifier=bool(d.get("attach_input_classifier", False)),
            heads=None if heads is None else tuple(heads),
        )

    @classmethod
    def fixed_depth(cls, input_dim: int, depth: int, width: int, num_classes: int) -> "NetConfig":
        """A plain ``depth``-layer network: ``depth - 1`` hidden layers, one output."""
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        hidden = (width,) * (depth - 1)
        return cls(input_dim, hidden, num_classes, heads=(depth - 1,))

    @classmethod
    def hedged(cls, input_dim: int, depth: int, width: int, num_classes: int) -> "NetConfig":
        """A ``depth``-layer network with a classifier on each hidden layer.

        Classifier depths run from 2 to ``depth``.
        """
        if depth < 2:
            raise ValueError(f"hedged networks need depth >= 2, got {depth}")
        return cls(input_dim, (width,) * (depth - 1), num_classes)


@dataclass
class HedgedNetwork:
    config: NetConfig
    hidden_weights: list[np.ndarray]
    classifier_weights: list[np.ndarray]
    alphas: np.ndarray

    def __post_init__(self):
        cfg = self.config
        widths = cfg.layer_widths
        if len(self.hidden_weights) != cfg.num_hidden:
            raise ValueError(f"expected {cfg.num_hidden} hidden matrices, got {len(self.hidden_weights)}")
        for l, W in enumerate(self.hidden_weights, start=1):
            want = (widths[l], widths[l - 1] + 1)
            if W.shape != want:
                raise ValueError(f"hidden layer {l}: expected shape {want}, got {W.shape}")
        if len(self.classifier_weights) != cfg.num_classifiers:
            raise ValueError(
                f"expected {cfg.num_classifiers} classifier matrices, got {len(self.classifier_weights)}"
            )
        for layer, T in zip(cfg.head_layers, self.classifier_weights):
            want = (cfg.num_classes, widths[layer] + 1)
            if T.shape != want:
                raise ValueError(f"classifier on layer {layer}: expected shape {want}, got {T.shape}")
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        if self.alphas.shape != (cfg.num_classifiers,):
            raise ValueError(f"alphas must have length {cfg.num_classifiers}, got {self.alphas.shape}")

    @property
    def num_classifiers(self) -> int:
        return self.config.num_classifiers

    def copy(self) -> "HedgedNetwork":
        return HedgedNetwork(
            self.config,
            [W.copy() for W in self.hidden_weights],
            [T.copy() for T in self.classifier_weights],
            self.alphas.copy(),
        )

    def parameters(self) -> list[np.ndarray]:
        return [*self.hidden_weights, *self.classifier_weights]

    def equals(self, other: "HedgedNetwork") -> bool:
        """Bit-exact comparison of configuration, weights and alphas."""
        if self.config != other.config:
            return False
        pairs = zip([*self.parameters(), self.alphas], [*other.parameters(), other.alphas])
        return all(a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in pairs)


@dataclass
class ForwardCache:
    """Activations from one forward pass.

    ``h_aug[l]`` is hidden layer ``l`` with a trailing 1; ``f`` stacks the
    classifier distributions row-wise (one row per classifier).
    """

    h_aug: list[np.ndarray]
    f: np.ndarray
    combined: np.ndarray = field(repr=False)

    @property
    def h(self) -> list[np.ndarray]:
        return [a[:-1] for a in self.h_aug]


def _draw(rng: np.random.Generator, shape: tuple[int, int], scheme: str) -> np.ndarray:
    out = np.zeros(shape)
    fan_in, fan_out = shape[1] - 1, shape[0]
    if scheme == "he":
        out[:, :-1] = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in)
    elif scheme == "xavier":
        out[:, :-1] = rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / (fan_in + fan_out))
    elif scheme != "zeros":
        raise ValueError(f"unknown init scheme {scheme!r}; choose from {INIT_SCHEMES}")
    return out


def init_network(config: NetConfig, rng: np.random.Generator, scheme: str = "he") -> HedgedNetwork:
    """Draw a fresh network.

    Weights are zero-mean Gaussian (``he``: std ``sqrt(2 / fan_in)``), biases
    zero, and alphas uniform over the attached classifiers. Hidden layers are
    drawn first, shallow to deep, then the classifiers in head order.
    """
    widths = config.layer_widths
    hidden = [_draw(rng, (widths[l], widths[l - 1] + 1), scheme) for l in range(1, config.num_hidden + 1)]
    heads = [_draw(rng, (config.num_classes, widths[l] + 1), scheme) for l in config.head_layers]
    k = config.num_classifiers
    return HedgedNetwork(config, hidden, heads, np.full(k, 1.0 / k))


def forward(net: HedgedNetwork, x) -> ForwardCache:
    cfg = net.config
    x = as_vector(x, "x")
    if x.shape[0] != cfg.input_dim:
        raise ValueError(f"input has {x.shape[0]} features, network expects {cfg.input_dim}")
    act = ACTIVATIONS[cfg.activation][0]
    h = np.empty(cfg.input_dim + 1)
    h[:-1] = x
    h[-1] = 1.0
    h_aug = [h]
    for W in net.hidden_weights:
        nxt = np.empty(W.shape[0] + 1)
        nxt[:-1] = act(W @ h)
        nxt[-1] = 1.0
        h_aug.append(nxt)
        h = nxt
    logits = np.stack([T @ h_aug[l] for l, T in zip(cfg.head_layers, net.classifier_weights)])
    f = softmax(logits)
    return ForwardCache(h_aug, f, net.alphas @ f)


def predict_from(combined: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the lowest index on ties
    return int(np.argmax(combined))


def predict(net: HedgedNetwork, x) -> int:
    return predict_from(forward(net, x).combined)


def save_checkpoint(net: HedgedNetwork, path) -> None:
    """Write ``net`` as an ``.npz`` archive.

    Layout: ``meta`` holds a JSON document ``{"format", "version", "config"}``;
    ``W1..WL`` are the hidden matrices, ``T0..T{K-1}`` the classifier matrices
    in head order, and ``alphas`` the hedge weights. Arrays are stored as raw
    float64, so a round trip is bit-exact.
    """
    meta = json.dumps(
        {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "config": net.config.to_dict()},
        sort_keys=True,
    )
    arrays = {"meta": np.frombuffer(meta.encode(), dtype=np.uint8), "alphas": net.alphas}
    arrays.update({f"W{l}": W for l, W in enumerate(net.hidden_weights, start=1)})
    arrays.update({f"T{k}": T for k, T in enumerate(net.classifier_weights)})
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> HedgedNetwork:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a hedgebp checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        config = NetConfig.from_dict(meta["config"])
        hidden = [data[f"W{l}"].copy() for l in range(1, config.num_hidden + 1)]
        heads = [data[f"T{k}"].copy() for k in range(config.num_classifiers)]
        return HedgedNetwork(config, hidden, heads, data["alphas"].copy())
