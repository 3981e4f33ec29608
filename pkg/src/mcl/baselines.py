"""Single complementary-label losses (PC, FREE, Forward) and decomposition wrappers.

The wrappers turn every ``(x, set)`` example into ``|set|`` records ``(x, ybar)``,
either once up front (``before`` shuffling) or per mini-batch (``after``).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, NamedTuple

import numpy as np
from scipy.special import expit

from .data import MclDataset, derive_seed, make_rng
from .errors import InvalidInputError
from .losses import CCE, LossKind, _weighted_grad, class_losses
from .numkernel import softmax

SINGLE_CL_NAMES = ("pc", "free", "forward")
UNSUPPORTED_NAMES = ("ga", "nn")
WRAPPER_MODES = ("before", "after")


@dataclass(frozen=True)
class SingleClMethod:
    name: str
    inner: LossKind = CCE  # only used by FREE

    def __post_init__(self):
        if self.name not in SINGLE_CL_NAMES:
            raise InvalidInputError(
                f"unknown single-CL method {self.name!r}; choose from {', '.join(SINGLE_CL_NAMES)}")


def _onehot(z: np.ndarray, cl) -> np.ndarray:
    oh = np.zeros(z.shape, dtype=bool)
    np.put_along_axis(oh, np.asarray(cl)[..., None], True, axis=-1)
    return oh


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def pc_loss(logits, cl):
    """Pairwise comparison with the sigmoid loss: sum over y' != cl of 1/(1+exp(f_y' - f_cl))."""
    z = np.asarray(logits, dtype=np.float64)
    oh = _onehot(z, cl)
    f_cl = np.take_along_axis(z, np.asarray(cl)[..., None], axis=-1)
    terms = expit(-(z - f_cl))
    return _scalar(np.where(oh, 0.0, terms).sum(axis=-1))


def pc_grad(logits, cl) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    oh = _onehot(z, cl)
    f_cl = np.take_along_axis(z, np.asarray(cl)[..., None], axis=-1)
    ell = expit(-(z - f_cl))
    slope = np.where(oh, 0.0, ell * (1.0 - ell))
    return np.where(oh, slope.sum(axis=-1, keepdims=True), -slope)


def free_loss(logits, cl, inner: LossKind = CCE):
    """``sum_y L(y) - (k-1) L(cl)``; can be negative and is not clamped."""
    z = np.asarray(logits, dtype=np.float64)
    L = class_losses(z, inner)
    k = z.shape[-1]
    at_cl = np.take_along_axis(L, np.asarray(cl)[..., None], axis=-1)[..., 0]
    return _scalar(L.sum(axis=-1) - (k - 1) * at_cl)


def free_grad(logits, cl, inner: LossKind = CCE) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    k = z.shape[-1]
    w = np.where(_onehot(z, cl), 1.0 - (k - 1), 1.0)
    return _weighted_grad(z, w, inner)


def _log_mass_without(z: np.ndarray, oh: np.ndarray) -> np.ndarray:
    zm = np.where(oh, -np.inf, z)
    m = zm.max(axis=-1, keepdims=True)
    lse_rest = m[..., 0] + np.log(np.exp(zm - m).sum(axis=-1))
    m_all = z.max(axis=-1, keepdims=True)
    lse_all = m_all[..., 0] + np.log(np.exp(z - m_all).sum(axis=-1))
    return lse_rest - lse_all


def forward_loss(logits, cl):
    """Cross-entropy of ``Q^T p`` at ``cl`` with uniform off-diagonal ``Q``."""
    z = np.asarray(logits, dtype=np.float64)
    k = z.shape[-1]
    return _scalar(-_log_mass_without(z, _onehot(z, cl)) + np.log(k - 1))


def forward_grad(logits, cl) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    oh = _onehot(z, cl)
    zm = np.where(oh, -np.inf, z)
    e = np.exp(zm - zm.max(axis=-1, keepdims=True))
    rest = e / e.sum(axis=-1, keepdims=True)
    return softmax(z) - rest


def single_cl_loss(logits, cl, method: SingleClMethod):
    if method.name == "pc":
        return pc_loss(logits, cl)
    if method.name == "free":
        return free_loss(logits, cl, method.inner)
    return forward_loss(logits, cl)


def single_cl_grad(logits, cl, method: SingleClMethod) -> np.ndarray:
    if method.name == "pc":
        return pc_grad(logits, cl)
    if method.name == "free":
        return free_grad(logits, cl, method.inner)
    return forward_grad(logits, cl)


def single_cl_risk_and_grad(logits, cl, method: SingleClMethod) -> tuple[float, np.ndarray]:
    """Mean loss over records, each record weighted equally."""
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[0] == 0:
        raise InvalidInputError("empty batch")
    value = np.atleast_1d(single_cl_loss(z, cl, method))
    return float(value.mean()), single_cl_grad(z, cl, method) / z.shape[0]


# ---------------------------------------------------------------------------
# decomposition wrappers


class Records(NamedTuple):
    """Single complementary-label records: feature row index and label."""

    rows: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.rows)


def decompose(mcl: MclDataset, idx=None) -> Records:
    """One record per (example, complementary label) pair, in example order."""
    mask = mcl.comp_mask if idx is None else mcl.comp_mask[np.asarray(idx)]
    rows, labels = np.nonzero(mask)
    if idx is not None:
        rows = np.asarray(idx)[rows]
    return Records(rows.astype(np.int64), labels.astype(np.int64))


def epoch_batches(mcl: MclDataset, mode: str, batch_size: int, seed: int, epoch: int = 0) -> Iterator[Records]:
    """Batches of single-CL records for one epoch.

    ``before``: the decomposed record list is shuffled and cut into batches of
    ``batch_size`` records. ``after``: examples are shuffled and cut into batches
    of ``batch_size`` examples, each then expanded, so record counts vary.
    """
    if mode not in WRAPPER_MODES:
        raise InvalidInputError(f"unknown wrapper mode {mode!r}; choose from {', '.join(WRAPPER_MODES)}")
    if batch_size < 1:
        raise InvalidInputError("batch_size must be >= 1")
    rng = make_rng(derive_seed(seed, epoch))
    if mode == "before":
        rec = decompose(mcl)
        perm = rng.permutation(len(rec))
        for start in range(0, len(rec), batch_size):
            sel = perm[start:start + batch_size]
            yield Records(rec.rows[sel], rec.labels[sel])
    else:
        perm = rng.permutation(len(mcl))
        for start in range(0, len(mcl), batch_size):
            yield decompose(mcl, perm[start:start + batch_size])


@dataclass(frozen=True)
class Purity:
    tp: int
    fp: int
    purity: Fraction


def purity_stats(k: int, s: int) -> dict[str, Purity]:
    """Count how often the true label vs. wrong labels act as non-complementary labels.

    Counts come from enumerating one concrete example (true label 0, set
    ``{1..s}``) in both the decomposed and the whole-set setting.
    """
    if k < 2 or not 1 <= s <= k - 1:
        raise InvalidInputError(f"need 1 <= s <= k-1, got k={k}, s={s}")
    true_label, comp = 0, set(range(1, s + 1))

    def count(candidate_sets):
        tp = sum(true_label in c for c in candidate_sets)
        fp = sum(len(c - {true_label}) for c in candidate_sets)
        return Purity(tp, fp, Fraction(tp, tp + fp))

    labels = set(range(k))
    decomposed = [labels - {ybar} for ybar in sorted(comp)]
    return {"decomposed": count(decomposed), "whole": count([labels - comp])}
