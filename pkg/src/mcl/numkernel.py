"""Dense numeric primitives: stable softmax, log-sum-exp, affine maps, argmax.

Every function accepts a single vector or a batch stacked along the first
axis; reductions always run over the last axis.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, InvalidInputError


def _as_finite(v, name: str, min_len: int = 1) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim == 0 or a.shape[-1] < min_len:
        raise InvalidInputError(f"{name}: need at least {min_len} entries on the last axis")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name}: non-finite input")
    return a


def log_sum_exp(logits) -> np.ndarray | float:
    """``max + log(sum(exp(x - max)))`` over the last axis."""
    z = _as_finite(logits, "log_sum_exp")
    m = z.max(axis=-1, keepdims=True)
    out = m[..., 0] + np.log(np.exp(z - m).sum(axis=-1))
    return float(out) if out.ndim == 0 else out


def log_softmax(logits) -> np.ndarray:
    z = _as_finite(logits, "log_softmax", 2)
    m = z.max(axis=-1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits) -> np.ndarray:
    """Max-shifted softmax; output rows are strictly positive and sum to one."""
    z = _as_finite(logits, "softmax", 2)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def affine(W, x, b) -> np.ndarray:
    """``W @ x + b`` for a single vector, or row-wise ``x @ W.T + b`` for a batch."""
    W = np.asarray(W, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise DimensionError(f"affine: W{W.shape}, x{x.shape}, b{b.shape} do not conform")
    return x @ W.T + b


def argmax_first(v) -> np.ndarray | int:
    """Index of the maximum; ties go to the lowest index."""
    a = _as_finite(v, "argmax_first")
    # np.argmax already returns the first occurrence
    out = np.argmax(a, axis=-1)
    return int(out) if out.ndim == 0 else out
