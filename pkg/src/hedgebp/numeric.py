"""Dense numeric primitives shared by the network, trainers and generators.

Vectors and matrices are plain ``numpy.float64`` arrays. Randomness comes from
``numpy.random.Generator`` over PCG64; Gaussian draws use numpy's ziggurat
sampler (``Generator.standard_normal``), so a seed pins every draw exactly.
"""

from __future__ import annotations

import numpy as np

PROB_FLOOR = 1e-12


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed``.

    Extra integers select an independent sub-stream, e.g. ``make_rng(seed, 1)``
    for features and ``make_rng(seed, 2)`` for label noise.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with an explicit shape check."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"matvec shape mismatch: matrix {m.shape} vs vector {v.shape}")
    return m @ v


def relu(v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0.0)


def relu_grad(v: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return (np.asarray(v) > 0.0).astype(np.float64)


def softmax(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] < 2:
        raise ValueError(f"softmax needs at least 2 entries, got {v.shape[-1]}")
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(pred: np.ndarray, label: int) -> float:
    """Negative log-probability of ``label``; the probability is floored at 1e-12."""
    if not 0 <= label < len(pred):
        raise IndexError(f"label {label} out of range for {len(pred)} classes")
    return float(-np.log(max(pred[label], PROB_FLOOR)))


def one_hot(label: int, num_classes: int) -> np.ndarray:
    out = np.zeros(num_classes)
    out[label] = 1.0
    return out
