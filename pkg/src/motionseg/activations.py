"""Reference activation functions used to unit-test the network's
nonlinearity configuration."""

from __future__ import annotations

import numpy as np


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-z))


def tanh(z):
    return np.tanh(np.asarray(z, dtype=np.float64))


def relu(z):
    return np.maximum(0.0, np.asarray(z, dtype=np.float64))


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


_KINDS = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu, "softmax": softmax}


def apply(kind: str, z):
    try:
        fn = _KINDS[kind]
    except KeyError:
        raise KeyError(f"unknown activation {kind!r}, expected one of {sorted(_KINDS)}")
    return fn(z)
