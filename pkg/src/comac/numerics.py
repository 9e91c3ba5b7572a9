"""Small shared numeric helpers (stable sigmoid/softmax, rounding)."""

from __future__ import annotations

import math

import numpy as np


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x) -> np.ndarray:
    """Max-subtracted softmax over a 1-D score vector."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x)
    ex = np.exp(shifted)
    return ex / np.sum(ex)


def log_softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x)
    return shifted - math.log(np.sum(np.exp(shifted)))


def log_sigmoid(x) -> np.ndarray:
    """log(sigmoid(x)) without underflow to -inf for moderate |x|."""
    x = np.asarray(x, dtype=np.float64)
    return -np.logaddexp(0.0, -x)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))
