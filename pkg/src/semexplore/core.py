"""Log-odds algebra over the class set {0 (free), 1..K}.

A belief over a cell is stored as a length-(K+1) vector of log ratios
against the free class, so element 0 is always exactly 0. All logarithms
are natural (nats).
"""

from __future__ import annotations

import numpy as np


def log_odds(values) -> np.ndarray:
    """Build a pivoted log-odds vector (or a stack of them, last axis).

    The free-class entry is subtracted from every entry so that
    ``out[..., 0] == 0`` exactly.
    """
    h = np.array(values, dtype=float)
    if h.ndim == 0 or h.shape[-1] < 2:
        raise ValueError("log-odds vectors need at least two entries (free + one class)")
    if not np.all(np.isfinite(h)):
        raise ValueError("log-odds entries must be finite")
    return h - h[..., :1]


def from_categorical(probs) -> np.ndarray:
    """Inverse of :func:`softmax` for strictly positive categoricals."""
    p = np.asarray(probs, dtype=float)
    if np.any(p <= 0.0):
        raise ValueError("log-odds are only defined for strictly positive probabilities")
    lp = np.log(p)
    return lp - lp[..., :1]


def logsumexp(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def softmax(h) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    e = np.exp(h - np.max(h, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def entropy(probs) -> np.ndarray:
    """Shannon entropy in nats along the last axis, with 0 log 0 = 0."""
    p = np.asarray(probs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, -p * np.log(p), 0.0)
    return np.sum(terms, axis=-1)


def entropy_from_log_odds(h) -> np.ndarray:
    """Entropy of ``softmax(h)`` computed without forming tiny probabilities.

    Uses H = lse(h) - sigma(h)^T h, which stays accurate for saturated cells.
    """
    h = np.asarray(h, dtype=float)
    return logsumexp(h) - np.sum(softmax(h) * h, axis=-1)


def f_gain(phi, h) -> np.ndarray:
    """Expected information a single update ``phi`` brings to a cell at ``h``.

    f(phi, h) = log(1^T exp(h) / 1^T exp(phi + h)) + phi^T softmax(phi + h),
    which equals KL(softmax(phi + h) || softmax(h)) and is therefore >= 0.
    Broadcasts over leading axes.

    The direct form subtracts O(1) log-sums to get a value that can be
    ~1e-8 for a nearly certain cell. Instead the update is shifted so the
    most likely class gets zero, and the log-partition ratio
    log sum_j p_j exp(d_j) is taken through log1p/expm1.
    """
    phi, h = np.broadcast_arrays(np.asarray(phi, dtype=float), np.asarray(h, dtype=float))
    top = np.argmax(h, axis=-1)[..., None]
    lr = h - np.take_along_axis(h, top, axis=-1)        # log p_j / p_top <= 0
    d = phi - np.take_along_axis(phi, top, axis=-1)
    r = np.exp(lr)
    R = np.sum(r, axis=-1)
    with np.errstate(over="ignore", invalid="ignore"):
        s = np.sum(r * np.expm1(d), axis=-1) / R
        c = np.where(np.abs(s) < 0.5, np.log1p(np.maximum(s, -0.5)),
                     logsumexp(lr + d) - np.log(R))
    q = softmax(lr + d)
    return np.maximum(np.sum(q * d, axis=-1) - c, 0.0)


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats, summed term by term (reference implementation)."""
    total = 0.0
    for pk, qk in zip(np.asarray(p, dtype=float), np.asarray(q, dtype=float)):
        if pk > 0.0:
            total += pk * (np.log(pk) - np.log(qk))
    return total
