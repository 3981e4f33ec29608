"""Per-class losses, the unbiased complementary-set risk, EXP/LOG surrogates.

All losses act on softmax outputs; logits are the canonical input so that the
log-based losses can go through log-softmax. Gradients are with respect to the
logits and are analytic. Functions accept one example (1-D logits) or a batch
(2-D, one row per example).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvariantViolation
from .numkernel import log_softmax, softmax

LOSS_NAMES = ("cce", "mae", "mse", "gce", "phuber")
SURROGATE_NAMES = ("exp", "log")
LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class LossKind:
    name: str
    q: float = 0.7
    tau: float = 10.0

    def __post_init__(self):
        if self.name not in LOSS_NAMES:
            raise InvalidInputError(f"unknown loss {self.name!r}; choose from {', '.join(LOSS_NAMES)}")
        if not 0 < self.q <= 1:
            raise InvalidInputError(f"GCE q must be in (0, 1], got {self.q}")
        if not self.tau > 1:
            raise InvalidInputError(f"PHuber-CE tau must be > 1, got {self.tau}")

    @property
    def bounded(self) -> bool:
        return self.name != "cce"

    def upper_bound(self) -> float:
        return {"cce": np.inf, "mae": 2.0, "mse": 2.0, "gce": 1.0 / self.q,
                "phuber": np.log(self.tau) + 1.0}[self.name]


CCE, MAE, MSE, GCE, PHUBER = (LossKind(n) for n in LOSS_NAMES)
ALL_LOSSES = (CCE, MAE, MSE, GCE, PHUBER)


@dataclass(frozen=True)
class Objective:
    """``unbiased`` (needs ``loss``), ``exp`` or ``log``."""

    name: str
    loss: LossKind | None = None
    surrogate_scale: bool = True

    def __post_init__(self):
        if self.name == "unbiased":
            if self.loss is None:
                raise InvalidInputError("the unbiased objective needs a per-class loss")
        elif self.name not in SURROGATE_NAMES:
            raise InvalidInputError(f"unknown objective {self.name!r}")

    @property
    def label(self) -> str:
        return self.loss.name if self.name == "unbiased" else self.name


def comp_mask(comp_set, k: int) -> np.ndarray:
    """Boolean mask for a complementary set given as indices or as a mask."""
    a = np.asarray(comp_set)
    if a.dtype == bool:
        if a.shape[-1] != k:
            raise InvalidInputError(f"mask has {a.shape[-1]} columns, expected {k}")
        m = a
    else:
        m = np.zeros(k, dtype=bool)
        idx = a.astype(np.int64).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= k):
            raise InvalidInputError(f"complementary labels must lie in 0..{k - 1}")
        m[idx] = True
    sizes = m.sum(axis=-1)
    if np.any(sizes == 0):
        raise InvariantViolation("complementary set is empty")
    if np.any(sizes == k):
        raise InvariantViolation("complementary set is the full label set")
    return m


# ---------------------------------------------------------------------------
# per-class losses


def _class_losses(p: np.ndarray, logp: np.ndarray, kind: LossKind) -> np.ndarray:
    """Loss of every candidate class, shape ``p.shape``."""
    if kind.name == "cce":
        return -logp
    if kind.name == "mae":
        return 2.0 - 2.0 * p
    if kind.name == "mse":
        return 1.0 - 2.0 * p + (p * p).sum(axis=-1, keepdims=True)
    if kind.name == "gce":
        return (1.0 - p ** kind.q) / kind.q
    # phuber: CE above the knee, its tangent line below
    lin = -kind.tau * p + np.log(kind.tau) + 1.0
    return np.where(p >= 1.0 / kind.tau, -logp, lin)


def class_losses(logits, kind: LossKind) -> np.ndarray:
    lp = log_softmax(logits)
    return _class_losses(np.exp(lp), lp, kind)


def per_class_loss(p, y, kind: LossKind):
    """Loss of probability vector(s) ``p`` at class ``y``."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        L = _class_losses(p, np.log(p), kind)
    out = np.take_along_axis(L, np.asarray(y)[..., None], axis=-1)[..., 0]
    return float(out) if out.ndim == 0 else out


def per_class_loss_logits(logits, y, kind: LossKind):
    out = np.take_along_axis(class_losses(logits, kind), np.asarray(y)[..., None], axis=-1)[..., 0]
    return float(out) if out.ndim == 0 else out


def _weighted_grad(logits, weights, kind: LossKind) -> np.ndarray:
    """Gradient w.r.t. logits of ``sum_c weights[c] * L(softmax(logits), c)``."""
    lp = log_softmax(logits)
    p = np.exp(lp)
    w = np.broadcast_to(np.asarray(weights, dtype=np.float64), p.shape)
    if kind.name == "mse":
        # dL/dp = 2 (sum w) p - 2 w
        g = 2.0 * w.sum(axis=-1, keepdims=True) * p - 2.0 * w
        return p * (g - (g * p).sum(axis=-1, keepdims=True))
    # losses that depend on p_c only: dL_c/dz = h(p_c) p_c (e_c - p), a_c = w_c h(p_c) p_c
    if kind.name == "cce":
        hp = -np.ones_like(p)
    elif kind.name == "mae":
        hp = -2.0 * p
    elif kind.name == "gce":
        hp = -(p ** kind.q)
    else:
        hp = np.where(p >= 1.0 / kind.tau, -1.0, -kind.tau * p)
    a = w * hp
    return a - p * a.sum(axis=-1, keepdims=True)


def per_class_loss_grad(logits, y, kind: LossKind) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    w = np.zeros_like(z)
    np.put_along_axis(w, np.asarray(y)[..., None], 1.0, axis=-1)
    return _weighted_grad(z, w, kind)


# ---------------------------------------------------------------------------
# unbiased complementary-set loss


def unbiased_weights(mask: np.ndarray) -> np.ndarray:
    """+1 on non-complementary classes, -(k-1-j)/j on the j complementary ones."""
    k = mask.shape[-1]
    j = mask.sum(axis=-1, keepdims=True).astype(np.float64)
    return np.where(mask, -(k - 1 - j) / j, 1.0)


def mcl_unbiased_loss(logits, comp_set, kind: LossKind):
    """Sum of losses outside the set minus ``(k-1-j)/j`` times the sum inside it."""
    z = np.asarray(logits, dtype=np.float64)
    m = comp_mask(comp_set, z.shape[-1])
    out = (unbiased_weights(m) * class_losses(z, kind)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def mcl_unbiased_grad(logits, comp_set, kind: LossKind) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    m = comp_mask(comp_set, z.shape[-1])
    return _weighted_grad(z, unbiased_weights(m), kind)


def mae_offset(k: int, j) -> np.ndarray | float:
    """Constant separating ``(k-1)/j * sum_{y not in set} L_MAE`` from ``(2k-2)/j * L'_MAE``."""
    return (2 * k - 2) * (k - np.asarray(j) - 1) / np.asarray(j)


def mae_complement_mass(p, comp_set) -> np.ndarray | float:
    """``L'_MAE = 1 - sum_{y not in set} p_y``, computed as the mass inside the set."""
    p = np.asarray(p, dtype=np.float64)
    m = comp_mask(comp_set, p.shape[-1])
    out = (p * m).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# EXP / LOG surrogates


def _kept_mass(logits, comp_set):
    z = np.asarray(logits, dtype=np.float64)
    m = comp_mask(comp_set, z.shape[-1])
    p = softmax(z)
    return p, ~m, (p * ~m).sum(axis=-1)


def surrogate_loss(logits, comp_set, which: str):
    """EXP: ``exp(-A)``; LOG: ``-log(A)``; ``A`` is the mass off the complementary set."""
    if which not in SURROGATE_NAMES:
        raise InvalidInputError(f"unknown surrogate {which!r}")
    _, _, A = _kept_mass(logits, comp_set)
    out = np.exp(-A) if which == "exp" else -np.log(np.maximum(A, LOG_FLOOR))
    return float(out) if np.ndim(out) == 0 else out


def surrogate_grad(logits, comp_set, which: str):
    """Gradient w.r.t. logits and the hard-example weight (``exp(-A)`` or ``1/A``).

    The gradient is ``-weight * dA/dlogits``.
    """
    if which not in SURROGATE_NAMES:
        raise InvalidInputError(f"unknown surrogate {which!r}")
    p, keep, A = _kept_mass(logits, comp_set)
    weight = np.exp(-A) if which == "exp" else 1.0 / np.maximum(A, LOG_FLOOR)
    dA = p * keep - A[..., None] * p
    grad = -weight[..., None] * dA
    if np.ndim(weight) == 0:
        return grad, float(weight)
    return grad, weight


# ---------------------------------------------------------------------------
# batch objective


def example_values(logits, mask, objective: Objective) -> np.ndarray:
    """Per-example objective values for a batch (surrogates include the (2k-2)/j scale)."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    m = np.atleast_2d(comp_mask(mask, z.shape[-1]))
    if objective.name == "unbiased":
        return (unbiased_weights(m) * class_losses(z, objective.loss)).sum(axis=-1)
    vals = np.atleast_1d(surrogate_loss(z, m, objective.name))
    if objective.surrogate_scale:
        k = z.shape[-1]
        vals = vals * (2 * k - 2) / m.sum(axis=-1)
    return vals


def batch_empirical_risk(logits_batch, comp_sets, objective: Objective) -> float:
    """Mean per-example objective; negative values are returned as they are."""
    z = np.atleast_2d(np.asarray(logits_batch, dtype=np.float64))
    if z.shape[0] == 0:
        raise InvalidInputError("empty batch")
    k = z.shape[-1]
    if not (isinstance(comp_sets, np.ndarray) and comp_sets.dtype == bool):
        comp_sets = np.stack([comp_mask(s, k) for s in comp_sets])
    return float(example_values(z, comp_sets, objective).mean())


def batch_risk_and_grad(logits, mask, objective: Objective) -> tuple[float, np.ndarray]:
    """Mean objective over the batch and its gradient w.r.t. each row of logits."""
    z = np.asarray(logits, dtype=np.float64)
    b, k = z.shape
    if b == 0:
        raise InvalidInputError("empty batch")
    m = comp_mask(mask, k)
    if objective.name == "unbiased":
        w = unbiased_weights(m)
        value = (w * class_losses(z, objective.loss)).sum(axis=-1)
        grad = _weighted_grad(z, w, objective.loss)
    else:
        value = surrogate_loss(z, m, objective.name)
        grad, _ = surrogate_grad(z, m, objective.name)
        if objective.surrogate_scale:
            scale = (2 * k - 2) / m.sum(axis=-1)
            value = value * scale
            grad = grad * scale[:, None]
    return float(np.mean(value)), grad / b
